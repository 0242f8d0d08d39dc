//! PNG round-tripping and pixel-space helpers.
//!
//! The 8-bit <-> real mapping is fixed as `v / 127.5 - 1` with a
//! round-half-up inverse, so a decode/encode cycle is byte-exact and
//! metrics computed on the 8-bit scale reproduce bit-for-bit.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[inline]
pub fn u8_to_unit(v: u8) -> f32 {
    v as f32 / 127.5 - 1.0
}

#[inline]
pub fn unit_to_u8(v: f32) -> u8 {
    let x = (v.clamp(-1.0, 1.0) + 1.0) * 127.5;
    // round half up
    let r = (x + 0.5).floor();
    r.clamp(0.0, 255.0) as u8
}

/// Encode a `[1, 3, h, w]` tensor as an 8-bit RGB PNG.
pub fn write_png(path: &Path, image: &Tensor) -> Result<()> {
    let [n, c, h, w] = image.shape();
    assert_eq!(n, 1, "write_png takes a single image");
    assert_eq!(c, 3, "write_png takes RGB");
    let mut buf = vec![0u8; h * w * 3];
    let data = image.data();
    let hw = h * w;
    for y in 0..h {
        for x in 0..w {
            let i = y * w + x;
            buf[i * 3] = unit_to_u8(data[i]);
            buf[i * 3 + 1] = unit_to_u8(data[hw + i]);
            buf[i * 3 + 2] = unit_to_u8(data[2 * hw + i]);
        }
    }
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut encoder = png::Encoder::new(BufWriter::new(file), w as u32, h as u32);
    encoder.set_color(png::ColorType::Rgb);
    encoder.set_depth(png::BitDepth::Eight);
    let mut writer = encoder.write_header().map_err(|e| Error::Png {
        path: path.into(),
        msg: e.to_string(),
    })?;
    writer.write_image_data(&buf).map_err(|e| Error::Png {
        path: path.into(),
        msg: e.to_string(),
    })?;
    Ok(())
}

/// Decode an 8-bit RGB PNG into a `[1, 3, h, w]` tensor in [-1, 1].
pub fn read_png(path: &Path) -> Result<Tensor> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let decoder = png::Decoder::new(file);
    let mut reader = decoder.read_info().map_err(|e| Error::Png {
        path: path.into(),
        msg: e.to_string(),
    })?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader.next_frame(&mut buf).map_err(|e| Error::Png {
        path: path.into(),
        msg: e.to_string(),
    })?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::Png {
            path: path.into(),
            msg: format!("unsupported bit depth {:?}", info.bit_depth),
        });
    }
    let (w, h) = (info.width as usize, info.height as usize);
    let hw = h * w;
    let mut out = Tensor::zeros([1, 3, h, w]);
    let data = out.data_mut();
    match info.color_type {
        png::ColorType::Rgb => {
            for i in 0..hw {
                data[i] = u8_to_unit(buf[i * 3]);
                data[hw + i] = u8_to_unit(buf[i * 3 + 1]);
                data[2 * hw + i] = u8_to_unit(buf[i * 3 + 2]);
            }
        }
        png::ColorType::Rgba => {
            for i in 0..hw {
                data[i] = u8_to_unit(buf[i * 4]);
                data[hw + i] = u8_to_unit(buf[i * 4 + 1]);
                data[2 * hw + i] = u8_to_unit(buf[i * 4 + 2]);
            }
        }
        png::ColorType::Grayscale => {
            for i in 0..hw {
                let v = u8_to_unit(buf[i]);
                data[i] = v;
                data[hw + i] = v;
                data[2 * hw + i] = v;
            }
        }
        other => {
            return Err(Error::Png {
                path: path.into(),
                msg: format!("unsupported color type {other:?}"),
            });
        }
    }
    Ok(out)
}

/// Bilinear resize of a `[1, c, h, w]` tensor (pixel-center convention).
pub fn resize_bilinear(image: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [n, c, h, w] = image.shape();
    assert_eq!(n, 1);
    if (oh, ow) == (h, w) {
        return image.clone();
    }
    let mut out = Tensor::zeros([1, c, oh, ow]);
    let sy = h as f32 / oh as f32;
    let sx = w as f32 / ow as f32;
    for ci in 0..c {
        let src = &image.data()[ci * h * w..(ci + 1) * h * w];
        for oy in 0..oh {
            let fy = ((oy as f32 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f32);
            let y0 = fy.floor() as usize;
            let y1 = (y0 + 1).min(h - 1);
            let ty = fy - y0 as f32;
            for ox in 0..ow {
                let fx = ((ox as f32 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f32);
                let x0 = fx.floor() as usize;
                let x1 = (x0 + 1).min(w - 1);
                let tx = fx - x0 as f32;
                let v00 = src[y0 * w + x0];
                let v01 = src[y0 * w + x1];
                let v10 = src[y1 * w + x0];
                let v11 = src[y1 * w + x1];
                let top = v00 + (v01 - v00) * tx;
                let bot = v10 + (v11 - v10) * tx;
                out.data_mut()[ci * oh * ow + oy * ow + ox] = top + (bot - top) * ty;
            }
        }
    }
    out
}

/// Horizontal mirror of a `[1, c, h, w]` tensor.
pub fn hflip(image: &Tensor) -> Tensor {
    let [n, c, h, w] = image.shape();
    assert_eq!(n, 1);
    let mut out = Tensor::zeros([1, c, h, w]);
    for ci in 0..c {
        for y in 0..h {
            for x in 0..w {
                out.data_mut()[ci * h * w + y * w + x] =
                    image.data()[ci * h * w + y * w + (w - 1 - x)];
            }
        }
    }
    out
}

/// Center-crop (or center-pad with edge replication) to `oh x ow`.
pub fn center_fit(image: &Tensor, oh: usize, ow: usize) -> Tensor {
    let [n, c, h, w] = image.shape();
    assert_eq!(n, 1);
    let mut out = Tensor::zeros([1, c, oh, ow]);
    let dy = oh as isize - h as isize;
    let dx = ow as isize - w as isize;
    for ci in 0..c {
        for oy in 0..oh {
            let sy = (oy as isize - dy / 2).clamp(0, h as isize - 1) as usize;
            for ox in 0..ow {
                let sx = (ox as isize - dx / 2).clamp(0, w as isize - 1) as usize;
                out.data_mut()[ci * oh * ow + oy * ow + ox] =
                    image.data()[ci * h * w + sy * w + sx];
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantization_round_trips_all_bytes() {
        for v in 0..=255u8 {
            assert_eq!(unit_to_u8(u8_to_unit(v)), v);
        }
        assert_eq!(unit_to_u8(-1.0), 0);
        assert_eq!(unit_to_u8(1.0), 255);
        assert_eq!(unit_to_u8(-1.5), 0);
        assert_eq!(unit_to_u8(1.5), 255);
    }

    #[test]
    fn png_write_read_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        let mut img = Tensor::zeros([1, 3, 8, 6]);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = u8_to_unit(((i * 7) % 256) as u8);
        }
        write_png(&path, &img).unwrap();
        let back = read_png(&path).unwrap();
        assert_eq!(back.shape(), [1, 3, 8, 6]);
        assert_eq!(back, img);
    }

    #[test]
    fn resize_identity_and_downscale_bounds() {
        let img = Tensor::from_vec([1, 1, 2, 2], vec![0.0, 1.0, -1.0, 0.5]);
        assert_eq!(resize_bilinear(&img, 2, 2), img);
        let up = resize_bilinear(&img, 4, 4);
        assert!(up.iter().all(|&v| (-1.0..=1.0).contains(&v)));
        let down = resize_bilinear(&up, 2, 2);
        assert_eq!(down.shape(), [1, 1, 2, 2]);
    }

    #[test]
    fn hflip_is_involution() {
        let img = Tensor::from_vec([1, 1, 2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let f = hflip(&img);
        assert_eq!(f.data(), &[3.0, 2.0, 1.0, 6.0, 5.0, 4.0]);
        assert_eq!(hflip(&f), img);
    }

    #[test]
    fn center_fit_crops_and_pads() {
        let img = Tensor::from_vec([1, 1, 4, 4], (0..16).map(|x| x as f32).collect());
        let crop = center_fit(&img, 2, 2);
        assert_eq!(crop.data(), &[5.0, 6.0, 9.0, 10.0]);
        let pad = center_fit(&crop, 4, 4);
        assert_eq!(pad.shape(), [1, 1, 4, 4]);
        assert_eq!(pad.data()[5], 5.0);
    }
}
