//! On-disk sample layout: one directory per sample holding the three
//! grayscale channel PNGs, plus the optional batch `manifest.json`.
//!
//! Channels may be 8- or 16-bit grayscale PNGs; 16-bit values are reduced
//! deterministically by keeping the high byte.

use std::path::{Path, PathBuf};

use image::{DynamicImage, ImageBuffer, Luma};
use thiserror::Error;

use crate::raster::{ChannelSet, GrayImage};

pub const CK_FILE: &str = "ck.png";
pub const DAPI_FILE: &str = "dapi.png";
pub const CD45_FILE: &str = "cd45.png";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("{path}: unsupported color type {color}; expected 8- or 16-bit grayscale")]
    UnsupportedColor { path: PathBuf, color: String },
}

pub fn read_gray_png(path: &Path) -> Result<GrayImage, DatasetError> {
    let decoded = image::ImageReader::open(path)
        .map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?
        .decode()
        .map_err(|e| DatasetError::Decode {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
    let (gray, width, height) = match decoded {
        DynamicImage::ImageLuma8(buf) => {
            let (w, h) = (buf.width(), buf.height());
            (buf.into_raw(), w, h)
        }
        DynamicImage::ImageLuma16(buf) => {
            let (w, h) = (buf.width(), buf.height());
            (buf.into_raw().iter().map(|&v| (v >> 8) as u8).collect(), w, h)
        }
        other => {
            return Err(DatasetError::UnsupportedColor {
                path: path.to_path_buf(),
                color: format!("{:?}", other.color()),
            })
        }
    };
    GrayImage::new(width, height, gray).map_err(|e| DatasetError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_gray_png(path: &Path, img: &GrayImage) -> Result<(), DatasetError> {
    let buf: ImageBuffer<Luma<u8>, Vec<u8>> =
        ImageBuffer::from_raw(img.width(), img.height(), img.pixels().to_vec())
            .expect("buffer length matches dimensions");
    buf.save(path).map_err(|e| DatasetError::Decode {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Load one sample directory into an aligned channel set.
pub fn load_channel_set(dir: &Path, sample_id: &str) -> Result<ChannelSet, DatasetError> {
    let ck = read_gray_png(&dir.join(CK_FILE))?;
    let dapi = read_gray_png(&dir.join(DAPI_FILE))?;
    let cd45 = read_gray_png(&dir.join(CD45_FILE))?;
    ChannelSet::new(sample_id, ck, dapi, cd45).map_err(|e| DatasetError::Decode {
        path: dir.to_path_buf(),
        message: e.to_string(),
    })
}

pub fn write_sample_dir(dir: &Path, channels: &ChannelSet) -> Result<(), DatasetError> {
    std::fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    write_gray_png(&dir.join(CK_FILE), &channels.ck)?;
    write_gray_png(&dir.join(DAPI_FILE), &channels.dapi)?;
    write_gray_png(&dir.join(CD45_FILE), &channels.cd45)?;
    Ok(())
}

/// Subdirectories of `root` in name order; each is treated as one sample,
/// named by its directory.
pub fn list_sample_dirs(root: &Path) -> Result<Vec<(String, PathBuf)>, DatasetError> {
    let entries = std::fs::read_dir(root).map_err(|source| DatasetError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| DatasetError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() {
            dirs.push((entry.file_name().to_string_lossy().into_owned(), path));
        }
    }
    dirs.sort();
    Ok(dirs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_preserves_pixels() {
        let dir = tempfile::tempdir().unwrap();
        let img = GrayImage::from_fn(17, 9, |x, y| (x * 13 + y * 7) as u8);
        let path = dir.path().join("t.png");
        write_gray_png(&path, &img).unwrap();
        assert_eq!(read_gray_png(&path).unwrap(), img);
    }

    #[test]
    fn sixteen_bit_sources_keep_the_high_byte() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("deep.png");
        let buf: ImageBuffer<Luma<u16>, Vec<u16>> =
            ImageBuffer::from_fn(4, 4, |x, y| Luma([(x as u16 * 4 + y as u16) << 8 | 0x00ff]));
        buf.save(&path).unwrap();
        let img = read_gray_png(&path).unwrap();
        for y in 0..4 {
            for x in 0..4 {
                assert_eq!(img.get(x, y), (x * 4 + y) as u8);
            }
        }
    }

    #[test]
    fn color_sources_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("rgb.png");
        let buf: ImageBuffer<image::Rgb<u8>, Vec<u8>> =
            ImageBuffer::from_fn(4, 4, |_, _| image::Rgb([1, 2, 3]));
        buf.save(&path).unwrap();
        assert!(matches!(
            read_gray_png(&path),
            Err(DatasetError::UnsupportedColor { .. })
        ));
    }

    #[test]
    fn sample_dir_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let img = |o: u8| GrayImage::from_fn(8, 8, |x, y| (x + y) as u8 + o);
        let set = ChannelSet::new("s1", img(0), img(10), img(20)).unwrap();
        let sample_dir = dir.path().join("s1");
        write_sample_dir(&sample_dir, &set).unwrap();
        let loaded = load_channel_set(&sample_dir, "s1").unwrap();
        assert_eq!(loaded, set);

        std::fs::remove_file(sample_dir.join(CD45_FILE)).unwrap();
        assert!(load_channel_set(&sample_dir, "s1").is_err());
    }

    #[test]
    fn sample_listing_is_sorted_and_dirs_only() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::create_dir(dir.path().join("b")).unwrap();
        std::fs::create_dir(dir.path().join("a")).unwrap();
        std::fs::write(dir.path().join("stray.txt"), "x").unwrap();
        let dirs = list_sample_dirs(dir.path()).unwrap();
        let names: Vec<&str> = dirs.iter().map(|(n, _)| n.as_str()).collect();
        assert_eq!(names, ["a", "b"]);
    }
}
