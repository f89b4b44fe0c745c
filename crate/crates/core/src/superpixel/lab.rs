use crate::raster::ImageRgb;
use std::sync::OnceLock;

// D65 reference white, Y normalised to 1.
const WHITE_X: f64 = 0.950_47;
const WHITE_Y: f64 = 1.0;
const WHITE_Z: f64 = 1.088_83;

fn srgb_to_linear(c: u8) -> f64 {
    static TABLE: OnceLock<[f64; 256]> = OnceLock::new();
    TABLE.get_or_init(|| std::array::from_fn(|i| decode_gamma(i as u8)))[c as usize]
}

fn decode_gamma(c: u8) -> f64 {
    let v = c as f64 / 255.0;
    if v <= 0.040_45 {
        v / 12.92
    } else {
        ((v + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const DELTA: f64 = 6.0 / 29.0;
    if t > DELTA * DELTA * DELTA {
        t.cbrt()
    } else {
        t / (3.0 * DELTA * DELTA) + 4.0 / 29.0
    }
}

/// CIELAB coordinates of one sRGB pixel under a D65 white point.
pub fn srgb_to_lab(rgb: [u8; 3]) -> [f64; 3] {
    let [r, g, b] = rgb.map(srgb_to_linear);
    let x = 0.412_456_4 * r + 0.357_576_1 * g + 0.180_437_5 * b;
    let y = 0.212_672_9 * r + 0.715_152_2 * g + 0.072_175_0 * b;
    let z = 0.019_333_9 * r + 0.119_192_0 * g + 0.950_304_1 * b;
    let fx = lab_f(x / WHITE_X);
    let fy = lab_f(y / WHITE_Y);
    let fz = lab_f(z / WHITE_Z);
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

/// Per-pixel Lab triples, row-major like the input.
pub fn rgb_to_lab(img: &ImageRgb) -> Vec<[f64; 3]> {
    img.pixels().iter().map(|&p| srgb_to_lab(p)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn white_is_reference_white() {
        let [l, a, b] = srgb_to_lab([255, 255, 255]);
        assert!((l - 100.0).abs() < 1e-3, "{l}");
        assert!(a.abs() < 0.01 && b.abs() < 0.01, "{a} {b}");
    }

    #[test]
    fn black_is_origin() {
        let lab = srgb_to_lab([0, 0, 0]);
        for v in lab {
            assert!(v.abs() < 1e-12);
        }
    }

    #[test]
    fn mid_gray_is_neutral() {
        let [l, a, b] = srgb_to_lab([119, 119, 119]);
        assert!(l > 40.0 && l < 60.0, "{l}");
        assert!(a.abs() < 0.01 && b.abs() < 0.01);
        // independent reference value for sRGB 119 gray
        assert!((l - 50.0).abs() < 0.1, "{l}");
    }

    #[test]
    fn lightness_stays_in_range() {
        for c in (0..=255u16).step_by(15) {
            for rgb in [[c as u8, 0, 0], [0, c as u8, 0], [0, 0, c as u8], [c as u8, 255, 128]] {
                let [l, _, _] = srgb_to_lab(rgb);
                assert!((0.0..=100.0 + 1e-9).contains(&l));
            }
        }
    }
}
