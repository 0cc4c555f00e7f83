//! Plain-ASCII PGM/PPM dumps for eyeballing images.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

use super::dataset::ImageDataset;

/// Render image `index` of `dataset` as plain PGM (`P2`, grayscale) or plain
/// PPM (`P3`, RGB) depending on its channel count.
pub fn image_to_text(dataset: &ImageDataset, index: usize) -> Result<String> {
    let (h, w, c) = (dataset.height, dataset.width, dataset.channels);
    let magic = match c {
        1 => "P2",
        3 => "P3",
        _ => {
            return Err(Error::InvalidArgument {
                op: "image_to_text",
                msg: format!("{c} channel(s); only 1 (PGM) and 3 (PPM) supported"),
            })
        }
    };
    let pixels = dataset.image(index);
    let mut out = String::new();
    let _ = writeln!(out, "{magic}");
    let _ = writeln!(out, "{w} {h}");
    let _ = writeln!(out, "255");
    for row in pixels.chunks_exact(w * c) {
        let line: Vec<String> = row.iter().map(|p| p.to_string()).collect();
        let _ = writeln!(out, "{}", line.join(" "));
    }
    Ok(out)
}

pub fn dump_image(dataset: &ImageDataset, index: usize, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, image_to_text(dataset, index)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_size() {
        let d = ImageDataset::new(vec![0, 128, 255, 7], vec![0], 2, 2, 1, vec!["a".into(), "b".into()]).unwrap();
        let text = image_to_text(&d, 0).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("P2"));
        assert_eq!(lines.next(), Some("2 2"));
        assert_eq!(lines.next(), Some("255"));
        assert_eq!(lines.next(), Some("0 128"));
        assert_eq!(lines.next(), Some("255 7"));
    }
}
