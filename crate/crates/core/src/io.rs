//! Sequence directories, box files and PNG frames.
//!
//! A sequence directory holds numbered PNG frames (directly or under `img/`)
//! and a `groundtruth_rect.txt` with one `x,y,w,h` line per frame; commas,
//! tabs and spaces are all accepted as separators.

use std::fs;
use std::path::{Path, PathBuf};

use crate::cropping::BBox;
use crate::error::{Error, Result};
use crate::evaluation::LoadedSequence;
use crate::synth::Sequence;
use crate::tensor::Tensor;

pub const GROUNDTRUTH_FILE: &str = "groundtruth_rect.txt";

/// Reads a PNG as a `[1, 3, h, w]` tensor with values in `[0, 1]`.
pub fn load_frame(path: &Path) -> Result<Tensor> {
    let img = image::open(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Tensor::from_fn([1, 3, h, w], |_, c, y, x| img.get_pixel(x as u32, y as u32)[c] as f64 / 255.0))
}

/// Writes the first image of a batch as an 8-bit RGB PNG.
pub fn save_frame(path: &Path, frame: &Tensor) -> Result<()> {
    if frame.channels() != 3 {
        return Err(Error::Input(format!("expected 3 channels, got {}", frame.channels())));
    }
    let (w, h) = (frame.width(), frame.height());
    let img = image::RgbImage::from_fn(w as u32, h as u32, |x, y| {
        image::Rgb([0, 1, 2].map(|c| (frame.at(0, c, y as usize, x as usize).clamp(0.0, 1.0) * 255.0).round() as u8))
    });
    img.save_with_format(path, image::ImageFormat::Png)?;
    Ok(())
}

pub fn parse_boxes(text: &str) -> Result<Vec<BBox>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            let v: Vec<f64> = line
                .split(|c: char| c == ',' || c.is_whitespace())
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
            match v[..] {
                [x, y, w, h] => BBox::from_xywh(x, y, w, h).map_err(|e| Error::Format(format!("line {}: {e}", i + 1))),
                _ => Err(Error::Format(format!("line {}: expected 4 values, got {}", i + 1, v.len()))),
            }
        })
        .collect()
}

pub fn read_boxes(path: &Path) -> Result<Vec<BBox>> {
    parse_boxes(&fs::read_to_string(path)?)
}

/// One `x,y,w,h` line per box; `{}` formatting keeps round trips exact.
pub fn format_boxes(boxes: &[BBox]) -> String {
    boxes
        .iter()
        .map(|b| {
            let [x, y, w, h] = b.to_xywh();
            format!("{x},{y},{w},{h}\n")
        })
        .collect()
}

pub fn write_boxes(path: &Path, boxes: &[BBox]) -> Result<()> {
    fs::write(path, format_boxes(boxes))?;
    Ok(())
}

/// PNG files of `dir` in name order.
pub fn frame_paths(dir: &Path) -> Result<Vec<PathBuf>> {
    let img = dir.join("img");
    let dir = if img.is_dir() { img } else { dir.to_path_buf() };
    let mut paths: Vec<PathBuf> = fs::read_dir(&dir)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    paths.retain(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("png")));
    paths.sort();
    Ok(paths)
}

pub fn load_sequence_dir(dir: &Path) -> Result<LoadedSequence> {
    let gt_path = dir.join(GROUNDTRUTH_FILE);
    if !gt_path.is_file() {
        return Err(Error::Input(format!("{} not found", gt_path.display())));
    }
    let groundtruth = read_boxes(&gt_path)?;
    let paths = frame_paths(dir)?;
    if paths.is_empty() {
        return Err(Error::Input(format!("no PNG frames in {}", dir.display())));
    }
    if groundtruth.is_empty() {
        return Err(Error::Input(format!("{} is empty", gt_path.display())));
    }
    let frames = paths.iter().map(|p| load_frame(p)).collect::<Result<Vec<_>>>()?;
    let name = dir.file_name().map_or_else(|| "sequence".into(), |n| n.to_string_lossy().into_owned());
    Ok(LoadedSequence { name, frames, groundtruth })
}

/// Subdirectories of `root` that carry a ground-truth file, in name order.
pub fn list_sequence_dirs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
        .map(|e| e.map(|e| e.path()))
        .collect::<std::io::Result<_>>()?;
    dirs.retain(|d| d.join(GROUNDTRUTH_FILE).is_file());
    dirs.sort();
    Ok(dirs)
}

/// Finds the result boxes of sequence `name`: `<name>.txt` or `<name>/boxes.txt`.
pub fn load_result_boxes(results: &Path, name: &str) -> Result<Vec<BBox>> {
    for p in [results.join(format!("{name}.txt")), results.join(name).join("boxes.txt")] {
        if p.is_file() {
            return read_boxes(&p);
        }
    }
    Err(Error::Input(format!("no results for '{name}' in {}", results.display())))
}

pub fn write_sequence_dir(dir: &Path, seq: &Sequence) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (i, f) in seq.frames.iter().enumerate() {
        save_frame(&dir.join(format!("{:05}.png", i + 1)), f)?;
    }
    write_boxes(&dir.join(GROUNDTRUTH_FILE), &seq.boxes)
}

/// Copy of `frame` with a one-pixel outline of `b` in `color`.
pub fn draw_box(frame: &Tensor, b: &BBox, color: [f64; 3]) -> Tensor {
    let mut out = frame.clone();
    let (w, h) = (frame.width() as i64, frame.height() as i64);
    let x0 = b.x_tl.round() as i64;
    let y0 = b.y_tl.round() as i64;
    let x1 = (b.x_br.round() as i64 - 1).max(x0);
    let y1 = (b.y_br.round() as i64 - 1).max(y0);
    let mut put = |x: i64, y: i64| {
        if (0..w).contains(&x) && (0..h).contains(&y) {
            for (c, v) in color.iter().enumerate() {
                out.set(0, c, y as usize, x as usize, *v);
            }
        }
    };
    for x in x0..=x1 {
        put(x, y0);
        put(x, y1);
    }
    for y in y0..=y1 {
        put(x0, y);
        put(x1, y);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate, SequenceSpec};

    #[test]
    fn box_files_round_trip_exactly() {
        let boxes = vec![BBox::from_xywh(1.5, 2.25, 10.0, 7.125).unwrap(), BBox::from_xywh(0.1, 0.2, 0.3, 0.7).unwrap()];
        assert_eq!(parse_boxes(&format_boxes(&boxes)).unwrap(), boxes);
    }

    #[test]
    fn parses_mixed_separators() {
        let b = parse_boxes("1,2,3,4\n5\t6\t7\t8\n\n9 10 11 12\n").unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b[1].to_xywh(), [5.0, 6.0, 7.0, 8.0]);
        assert!(parse_boxes("1,2,3\n").is_err());
        assert!(parse_boxes("1,2,x,4\n").is_err());
    }

    #[test]
    fn sequence_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seq = generate(&SequenceSpec { length: 3, frame_width: 40, frame_height: 30, init_box: [5.0, 5.0, 10.0, 9.0], ..Default::default() }).unwrap();
        let path = dir.path().join("s1");
        write_sequence_dir(&path, &seq).unwrap();
        let loaded = load_sequence_dir(&path).unwrap();
        assert_eq!(loaded.name, "s1");
        assert_eq!(loaded.groundtruth, seq.boxes);
        assert_eq!(loaded.frames.len(), 3);
        for (a, b) in loaded.frames.iter().zip(&seq.frames) {
            assert_eq!(a.shape(), b.shape());
            assert!(a.data().iter().zip(b.data()).all(|(x, y)| (x - y).abs() <= 0.5 / 255.0 + 1e-12));
        }
        assert_eq!(list_sequence_dirs(dir.path()).unwrap(), vec![path]);
    }

    #[test]
    fn missing_groundtruth_is_an_input_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(load_sequence_dir(dir.path()), Err(Error::Input(_))));
    }

    #[test]
    fn outline_stays_on_the_border() {
        let f = Tensor::zeros([1, 3, 10, 10]);
        let o = draw_box(&f, &BBox::from_xywh(2.0, 3.0, 4.0, 5.0).unwrap(), [1.0, 0.0, 0.0]);
        assert_eq!(o.at(0, 0, 3, 2), 1.0);
        assert_eq!(o.at(0, 0, 7, 5), 1.0);
        assert_eq!(o.at(0, 0, 5, 3), 0.0);
        assert_eq!(o.plane(0, 0).iter().filter(|v| **v == 1.0).count(), 14);
    }
}
