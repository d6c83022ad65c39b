//! PNG encoding of label rasters (grey, 8 bit) and sim frames (RGB, 8 bit).

use std::io::Cursor;
use std::path::Path;

use png::{BitDepth, ColorType, Compression, Decoder, Encoder};

use super::{corrupt, Result};
use crate::renderer::{LabelRaster, SimFrame};

fn encode(width: u32, height: u32, color: ColorType, data: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    let mut enc = Encoder::new(&mut out, width, height);
    enc.set_color(color);
    enc.set_depth(BitDepth::Eight);
    enc.set_compression(Compression::Balanced);
    let mut writer = enc.write_header().expect("in-memory PNG header");
    writer.write_image_data(data).expect("in-memory PNG data");
    writer.finish().expect("in-memory PNG end");
    out
}

fn decode(bytes: &[u8], color: ColorType, path: &Path) -> Result<(u32, u32, Vec<u8>)> {
    let mut reader = Decoder::new(Cursor::new(bytes))
        .read_info()
        .map_err(|e| corrupt(path, e))?;
    let (got_color, depth) = reader.output_color_type();
    if got_color != color || depth != BitDepth::Eight {
        return Err(corrupt(
            path,
            format!("expected 8-bit {color:?}, found {depth:?} {got_color:?}"),
        ));
    }
    let size = reader
        .output_buffer_size()
        .ok_or_else(|| corrupt(path, "image too large"))?;
    let mut buf = vec![0; size];
    let info = reader.next_frame(&mut buf).map_err(|e| corrupt(path, e))?;
    buf.truncate(info.buffer_size());
    Ok((info.width, info.height, buf))
}

pub fn encode_label_png(raster: &LabelRaster) -> Vec<u8> {
    encode(raster.width, raster.height, ColorType::Grayscale, &raster.labels)
}

/// `path` only labels errors.
pub fn decode_label_png(bytes: &[u8], path: &Path) -> Result<LabelRaster> {
    let (width, height, labels) = decode(bytes, ColorType::Grayscale, path)?;
    Ok(LabelRaster { width, height, labels })
}

pub fn encode_frame_png(frame: &SimFrame) -> Vec<u8> {
    encode(frame.width, frame.height, ColorType::Rgb, &frame.rgb)
}

pub fn decode_frame_png(bytes: &[u8], path: &Path) -> Result<SimFrame> {
    let (width, height, rgb) = decode(bytes, ColorType::Rgb, path)?;
    Ok(SimFrame { width, height, rgb })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataio::DataError;

    #[test]
    fn label_png_round_trip() {
        let mut r = LabelRaster::new(7, 5);
        for (i, l) in r.labels.iter_mut().enumerate() {
            *l = (i * 37 % 256) as u8;
        }
        let bytes = encode_label_png(&r);
        assert_eq!(decode_label_png(&bytes, Path::new("m.png")).unwrap(), r);
        assert_eq!(encode_label_png(&r), bytes);
    }

    #[test]
    fn frame_png_round_trip() {
        let mut r = LabelRaster::new(4, 3);
        r.set(1, 1, 3);
        r.set(2, 2, 12);
        let f = SimFrame::from_labels(&r);
        assert_eq!(decode_frame_png(&encode_frame_png(&f), Path::new("f.png")).unwrap(), f);
    }

    #[test]
    fn truncated_and_wrong_colour_are_corrupt() {
        let bytes = encode_label_png(&LabelRaster::new(16, 16));
        let cut = &bytes[..bytes.len() / 2];
        assert!(matches!(
            decode_label_png(cut, Path::new("m.png")),
            Err(DataError::Corrupt { .. })
        ));
        let rgb = encode_frame_png(&SimFrame::from_labels(&LabelRaster::new(2, 2)));
        assert!(matches!(
            decode_label_png(&rgb, Path::new("m.png")),
            Err(DataError::Corrupt { .. })
        ));
    }
}
