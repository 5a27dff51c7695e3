use super::{GridImage, VectorField};

/// Forward differences with a Neumann boundary: the last column of `px`
/// and the last row of `py` are zero.
pub fn gradient(u: &GridImage) -> VectorField {
    let (w, h) = (u.width(), u.height());
    let inv = 1.0 / u.spacing();
    let d = u.as_slice();
    let mut px = vec![0.0; w * h];
    let mut py = vec![0.0; w * h];
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            if j + 1 < w {
                px[k] = (d[k + 1] - d[k]) * inv;
            }
            if i + 1 < h {
                py[k] = (d[k + w] - d[k]) * inv;
            }
        }
    }
    VectorField {
        width: w,
        height: h,
        spacing: u.spacing(),
        px,
        py,
    }
}

/// Discrete divergence, defined as the exact negative transpose of
/// [`gradient`] so that `<grad u, p> = -<u, div p>` holds to rounding.
pub fn divergence(p: &VectorField) -> GridImage {
    let (w, h) = (p.width(), p.height());
    let inv = 1.0 / p.spacing();
    let mut out = vec![0.0; w * h];
    // Scatter the transpose of each forward difference entry: the row of
    // grad for pixel k touches k (with -1) and its neighbour (with +1).
    for i in 0..h {
        for j in 0..w {
            let k = i * w + j;
            if j + 1 < w {
                let v = p.px[k] * inv;
                out[k] += v;
                out[k + 1] -= v;
            }
            if i + 1 < h {
                let v = p.py[k] * inv;
                out[k] += v;
                out[k + w] -= v;
            }
        }
    }
    GridImage {
        width: w,
        height: h,
        spacing: p.spacing(),
        data: out,
    }
}

/// `div(grad u)`: the Neumann 5-point Laplacian.
pub fn laplacian(u: &GridImage) -> GridImage {
    divergence(&gradient(u))
}
