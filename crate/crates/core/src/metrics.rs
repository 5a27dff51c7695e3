//! Reconstruction quality measures and analytic test phantoms.

use crate::error::{Error, Result};
use crate::grid::GridImage;

/// Value reported when two images coincide.
pub const PSNR_CAP: f64 = 99.0;

pub fn mse(u: &GridImage, reference: &GridImage) -> Result<f64> {
    u.check_shape(reference)?;
    let n = u.len().max(1) as f64;
    Ok(u.as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        / n)
}

/// `10 log10(peak^2 / MSE)`, capped at [`PSNR_CAP`].
pub fn psnr(u: &GridImage, reference: &GridImage, peak: f64) -> Result<f64> {
    if !(peak > 0.0) {
        return Err(Error::InvalidArgument(format!("peak must be positive, got {peak}")));
    }
    let m = mse(u, reference)?;
    if m == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (peak * peak / m).log10()).min(PSNR_CAP))
}

/// `|u - ref| / |ref|`, or `|u|` when the reference vanishes.
pub fn rel_err(u: &GridImage, reference: &GridImage) -> Result<f64> {
    u.check_shape(reference)?;
    let diff = u
        .as_slice()
        .iter()
        .zip(reference.as_slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    let r = reference.norm();
    Ok(if r == 0.0 { diff } else { diff / r })
}

fn check_binary(m: &GridImage) -> Result<()> {
    match m.as_slice().iter().find(|&&v| v != 0.0 && v != 1.0) {
        Some(&v) => Err(Error::NonBinaryMask(v)),
        None => Ok(()),
    }
}

/// `2 |A ∩ B| / (|A| + |B|)`; one when both masks are empty.
pub fn dice(a: &GridImage, b: &GridImage) -> Result<f64> {
    a.check_shape(b)?;
    check_binary(a)?;
    check_binary(b)?;
    let (mut both, mut total) = (0.0, 0.0);
    for (&x, &y) in a.as_slice().iter().zip(b.as_slice()) {
        both += x * y;
        total += x + y;
    }
    Ok(if total == 0.0 { 1.0 } else { 2.0 * both / total })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PhantomKind {
    Disk,
    Rectangles,
    SheppLike,
}

impl std::str::FromStr for PhantomKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "disk" => Ok(Self::Disk),
            "rectangles" => Ok(Self::Rectangles),
            "shepp_like" => Ok(Self::SheppLike),
            other => Err(Error::Parse(format!("unknown phantom '{other}'"))),
        }
    }
}

/// Smallest supported phantom side.
pub const MIN_PHANTOM_SIZE: usize = 16;

/// Modified Shepp–Logan table (Toft): intensity, semi-axes `a, b`, centre
/// `x0, y0` and rotation in degrees, on `[-1, 1]^2` with `y` pointing up.
pub const SHEPP_LOGAN: [[f64; 6]; 10] = [
    [1.0, 0.69, 0.92, 0.0, 0.0, 0.0],
    [-0.8, 0.6624, 0.874, 0.0, -0.0184, 0.0],
    [-0.2, 0.11, 0.31, 0.22, 0.0, -18.0],
    [-0.2, 0.16, 0.41, -0.22, 0.0, 18.0],
    [0.1, 0.21, 0.25, 0.0, 0.35, 0.0],
    [0.1, 0.046, 0.046, 0.0, 0.1, 0.0],
    [0.1, 0.046, 0.046, 0.0, -0.1, 0.0],
    [0.1, 0.046, 0.023, -0.08, -0.605, 0.0],
    [0.1, 0.023, 0.023, 0.0, -0.606, 0.0],
    [0.1, 0.023, 0.046, 0.06, -0.605, 0.0],
];

/// Rectangle blocks as `(row_start, row_end, col_start, col_end)` in
/// eighths of the side, with their intensities.
const BLOCKS: [([usize; 4], f64); 3] = [([1, 3, 1, 4], 0.3), ([4, 7, 1, 3], 0.6), ([2, 6, 5, 7], 1.0)];

/// Deterministic `size × size` phantom with values in `[0, 1]`.
pub fn make_phantom(kind: PhantomKind, size: usize) -> Result<GridImage> {
    if size < MIN_PHANTOM_SIZE {
        return Err(Error::InvalidArgument(format!(
            "phantoms need size >= {MIN_PHANTOM_SIZE}, got {size}"
        )));
    }
    let s = size as f64;
    Ok(match kind {
        PhantomKind::Disk => disk(size, 0.4),
        PhantomKind::Rectangles => GridImage::from_fn(size, size, |i, j| {
            BLOCKS
                .iter()
                .find(|(b, _)| (b[0] * size / 8..b[1] * size / 8).contains(&i) && (b[2] * size / 8..b[3] * size / 8).contains(&j))
                .map_or(0.0, |(_, c)| *c)
        }),
        PhantomKind::SheppLike => GridImage::from_fn(size, size, |i, j| {
            let x = (2.0 * j as f64 + 1.0) / s - 1.0;
            let y = 1.0 - (2.0 * i as f64 + 1.0) / s;
            let mut v = 0.0;
            for [amp, a, b, x0, y0, deg] in SHEPP_LOGAN {
                let (sin, cos) = deg.to_radians().sin_cos();
                let (dx, dy) = (x - x0, y - y0);
                let xr = dx * cos + dy * sin;
                let yr = -dx * sin + dy * cos;
                if (xr / a).powi(2) + (yr / b).powi(2) <= 1.0 {
                    v += amp;
                }
            }
            v.clamp(0.0, 1.0)
        }),
    })
}

/// Unit-intensity disk centred in the grid with radius `fraction * size`.
pub fn disk(size: usize, fraction: f64) -> GridImage {
    let c = size as f64 / 2.0;
    let r = fraction * size as f64;
    GridImage::from_fn(size, size, |i, j| {
        let (di, dj) = (i as f64 + 0.5 - c, j as f64 + 0.5 - c);
        if di * di + dj * dj <= r * r {
            1.0
        } else {
            0.0
        }
    })
}

/// Two-valued image: `inside` where `mask` is one, `outside` elsewhere.
pub fn two_phase(mask: &GridImage, inside: f64, outside: f64) -> GridImage {
    mask.map(|m| if m > 0.5 { inside } else { outside })
}
