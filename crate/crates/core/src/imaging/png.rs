use image::codecs::png::PngEncoder;
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use super::{BinaryMask, Channels, ImagingError, ParseMap, RasterImage};

pub fn encode_png(image: &RasterImage) -> Vec<u8> {
    let mut out = Vec::new();
    let color = match image.channels() {
        Channels::Gray => ExtendedColorType::L8,
        Channels::Rgb => ExtendedColorType::Rgb8,
    };
    PngEncoder::new(&mut out)
        .write_image(image.as_bytes(), image.width(), image.height(), color)
        .expect("encoding an in-memory 8-bit buffer cannot fail");
    out
}

/// Decodes any PNG to 8-bit gray (if the source has no colour) or RGB.
/// Alpha is dropped.
pub fn decode_png(bytes: &[u8]) -> Result<RasterImage, ImagingError> {
    let img = image::load_from_memory_with_format(bytes, ImageFormat::Png)
        .map_err(|e| ImagingError::Png(e.to_string()))?;
    let (w, h) = (img.width(), img.height());
    match img {
        DynamicImage::ImageLuma8(buf) => RasterImage::new(w, h, Channels::Gray, buf.into_raw()),
        DynamicImage::ImageLuma16(_)
        | DynamicImage::ImageLumaA8(_)
        | DynamicImage::ImageLumaA16(_) => {
            RasterImage::new(w, h, Channels::Gray, img.to_luma8().into_raw())
        }
        other => RasterImage::new(w, h, Channels::Rgb, other.to_rgb8().into_raw()),
    }
}

/// Masks travel as single-channel PNGs with values {0, 255}; anything at or
/// above half intensity counts as set.
pub fn decode_mask_png(bytes: &[u8]) -> Result<BinaryMask, ImagingError> {
    Ok(BinaryMask::from_gray(&decode_png(bytes)?))
}

/// Parse maps travel as single-channel PNGs holding label indices.
pub fn decode_parse_map_png(bytes: &[u8]) -> Result<ParseMap, ImagingError> {
    let img = decode_png(bytes)?;
    if img.channels() != Channels::Gray {
        return Err(ImagingError::ChannelMismatch(1, 3));
    }
    ParseMap::from_gray(&img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::imaging::Label;

    #[test]
    fn png_round_trip_gray_and_rgb() {
        let g = RasterImage::from_fn_gray(7, 5, |x, y| (x * 30 + y) as u8);
        assert_eq!(decode_png(&encode_png(&g)).unwrap(), g);
        let c = RasterImage::from_fn_rgb(4, 9, |x, y| [x as u8, y as u8, (x * y) as u8]);
        assert_eq!(decode_png(&encode_png(&c)).unwrap(), c);
    }

    #[test]
    fn encoding_is_deterministic() {
        let c = RasterImage::from_fn_rgb(16, 16, |x, y| [x as u8 * 9, y as u8 * 3, 1]);
        assert_eq!(encode_png(&c), encode_png(&c));
    }

    #[test]
    fn mask_and_parse_map_round_trip() {
        let m = BinaryMask::from_fn(6, 6, |x, y| x > y);
        assert_eq!(decode_mask_png(&encode_png(&m.to_gray())).unwrap(), m);
        let p = ParseMap::from_fn(5, 3, |x, _| Label::ALL[x as usize]);
        assert_eq!(decode_parse_map_png(&encode_png(&p.to_gray())).unwrap(), p);
    }

    #[test]
    fn malformed_png_is_an_error() {
        assert!(matches!(
            decode_png(b"not a png"),
            Err(ImagingError::Png(_))
        ));
        let bad = RasterImage::filled(2, 2, Channels::Gray, &[42]);
        assert_eq!(
            decode_parse_map_png(&encode_png(&bad)),
            Err(ImagingError::InvalidLabel(42))
        );
    }
}
