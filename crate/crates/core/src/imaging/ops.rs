use super::{BinaryMask, ImagingError, Label, ParseMap, RasterImage, Rect};
use crate::invocation::ItemKind;

/// Mid-gray used for pixels hidden from the generator.
pub const DEFAULT_FILL: u8 = 128;

/// Region to obscure for a full outfit change of `item`.
pub fn mask_from_item(parse: &ParseMap, item: ItemKind) -> Result<BinaryMask, ImagingError> {
    let labels: &[Label] = match item {
        ItemKind::UpperBody => &[Label::UpperClothes, Label::Arms],
        ItemKind::LowerBody => &[Label::LowerClothes, Label::Legs],
        ItemKind::FullBody => &[
            Label::UpperClothes,
            Label::LowerClothes,
            Label::Dress,
            Label::Arms,
            Label::Legs,
        ],
        ItemKind::Unspecified => return Err(ImagingError::ItemUnspecified),
    };
    Ok(parse.region(labels))
}

pub fn apply_mask(image: &RasterImage, mask: &BinaryMask) -> Result<RasterImage, ImagingError> {
    apply_mask_with_fill(image, mask, DEFAULT_FILL)
}

/// Sets every masked pixel (all channels) to `fill`; the rest is copied.
pub fn apply_mask_with_fill(
    image: &RasterImage,
    mask: &BinaryMask,
    fill: u8,
) -> Result<RasterImage, ImagingError> {
    mask.ensure_dims(image.dims())?;
    let c = image.channels().count();
    let mut out = image.clone();
    for (px, &set) in out.data.chunks_exact_mut(c).zip(mask.bits()) {
        if set {
            px.fill(fill);
        }
    }
    Ok(out)
}

/// `patch` where the mask is set, `base` elsewhere.
pub fn composite(
    base: &RasterImage,
    patch: &RasterImage,
    mask: &BinaryMask,
) -> Result<RasterImage, ImagingError> {
    base.ensure_same_shape(patch)?;
    mask.ensure_dims(base.dims())?;
    let c = base.channels().count();
    let mut out = base.clone();
    for ((dst, src), &set) in out
        .data
        .chunks_exact_mut(c)
        .zip(patch.data.chunks_exact(c))
        .zip(mask.bits())
    {
        if set {
            dst.copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Tightest rectangle around the set bits; `None` when the mask is empty.
pub fn bounding_box(mask: &BinaryMask) -> Option<Rect> {
    let (mut x0, mut y0, mut x1, mut y1) = (u32::MAX, u32::MAX, 0u32, 0u32);
    let mut any = false;
    for y in 0..mask.height() {
        for x in 0..mask.width() {
            if mask.get(x, y) {
                any = true;
                x0 = x0.min(x);
                y0 = y0.min(y);
                x1 = x1.max(x);
                y1 = y1.max(y);
            }
        }
    }
    any.then(|| Rect {
        x: x0,
        y: y0,
        width: x1 - x0 + 1,
        height: y1 - y0 + 1,
    })
}

/// Square (Chebyshev) dilation. Radius 0 returns the mask unchanged.
pub fn dilate(mask: &BinaryMask, radius: u32) -> BinaryMask {
    if radius == 0 || mask.is_empty() {
        return mask.clone();
    }
    let (w, h) = mask.dims();
    // Separable: horizontal pass, then vertical.
    let mut horiz = BinaryMask::empty(w, h);
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            if (lo..=hi).any(|xx| mask.get(xx, y)) {
                horiz.set(x, y, true);
            }
        }
    }
    BinaryMask::from_fn(w, h, |x, y| {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        (lo..=hi).any(|yy| horiz.get(x, yy))
    })
}

/// Nearest-neighbour resampling to `width` x `height`.
pub fn resize_nearest(image: &RasterImage, width: u32, height: u32) -> RasterImage {
    assert!(
        width > 0 && height > 0,
        "target dimensions must be positive"
    );
    let c = image.channels().count();
    let (sw, sh) = (image.width() as u64, image.height() as u64);
    let mut data = Vec::with_capacity(width as usize * height as usize * c);
    for y in 0..height as u64 {
        let sy = (y * sh / height as u64) as u32;
        for x in 0..width as u64 {
            let sx = (x * sw / width as u64) as u32;
            data.extend_from_slice(image.pixel(sx, sy));
        }
    }
    RasterImage::new(width, height, image.channels(), data).expect("buffer sized for target")
}
