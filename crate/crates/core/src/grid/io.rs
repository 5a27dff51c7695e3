//! PGM and CSV readers/writers for [`GridImage`].
//!
//! PGM files carry 8-bit gray levels. Real values are mapped through the
//! affine map `level = round(255 * (v - lo) / (hi - lo))`, clamped to
//! `[0, 255]`; reading applies the inverse `v = lo + level / maxval * (hi - lo)`.
//! The default range is `[0, 1]`.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use super::GridImage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgmFormat {
    /// `P2`
    Ascii,
    /// `P5`
    Binary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntensityRange {
    pub lo: f64,
    pub hi: f64,
}

impl Default for IntensityRange {
    fn default() -> Self {
        Self { lo: 0.0, hi: 1.0 }
    }
}

impl IntensityRange {
    pub fn new(lo: f64, hi: f64) -> Result<Self> {
        if !(hi > lo) || !lo.is_finite() || !hi.is_finite() {
            return Err(Error::InvalidArgument(format!("bad intensity range [{lo}, {hi}]")));
        }
        Ok(Self { lo, hi })
    }

    fn to_level(self, v: f64) -> u8 {
        let t = (v - self.lo) / (self.hi - self.lo);
        (255.0 * t).round().clamp(0.0, 255.0) as u8
    }
}

pub fn write_pgm<W: Write>(
    img: &GridImage,
    mut out: W,
    format: PgmFormat,
    range: IntensityRange,
) -> Result<()> {
    let (w, h) = (img.width(), img.height());
    match format {
        PgmFormat::Ascii => {
            writeln!(out, "P2\n{w} {h}\n255")?;
            for row in img.as_slice().chunks(w) {
                let line: Vec<String> = row.iter().map(|&v| range.to_level(v).to_string()).collect();
                writeln!(out, "{}", line.join(" "))?;
            }
        }
        PgmFormat::Binary => {
            write!(out, "P5\n{w} {h}\n255\n")?;
            let bytes: Vec<u8> = img.as_slice().iter().map(|&v| range.to_level(v)).collect();
            out.write_all(&bytes)?;
        }
    }
    Ok(())
}

pub fn save_pgm(img: &GridImage, path: impl AsRef<Path>, format: PgmFormat, range: IntensityRange) -> Result<()> {
    let mut buf = Vec::new();
    write_pgm(img, &mut buf, format, range)?;
    fs::write(path, buf)?;
    Ok(())
}

/// Parses P2 or P5 data. `#` comments are allowed in the header.
pub fn parse_pgm(bytes: &[u8], range: IntensityRange) -> Result<GridImage> {
    let mut pos = 0;
    let mut header = Vec::with_capacity(4);
    while header.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Parse("truncated PGM header".into()));
        }
        header.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    let magic = header[0].as_str();
    let num = |s: &str, what: &str| -> Result<usize> {
        s.parse()
            .map_err(|_| Error::Parse(format!("bad PGM {what}: {s:?}")))
    };
    let (w, h, maxval) = (num(&header[1], "width")?, num(&header[2], "height")?, num(&header[3], "maxval")?);
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Parse(format!("unsupported PGM maxval {maxval}")));
    }
    let scale = (range.hi - range.lo) / maxval as f64;
    let levels: Vec<usize> = match magic {
        "P2" => {
            let text = String::from_utf8_lossy(&bytes[pos..]);
            text.split_whitespace()
                .take(w * h)
                .map(|t| num(t, "pixel"))
                .collect::<Result<_>>()?
        }
        "P5" => {
            if maxval > 255 {
                return Err(Error::Parse("16-bit P5 is not supported".into()));
            }
            // exactly one whitespace byte separates the header from the raster
            let raster = bytes.get(pos + 1..).unwrap_or(&[]);
            raster.iter().take(w * h).map(|&b| b as usize).collect()
        }
        other => return Err(Error::Parse(format!("not a PGM file (magic {other:?})"))),
    };
    if levels.len() != w * h {
        return Err(Error::Parse(format!("expected {} pixels, found {}", w * h, levels.len())));
    }
    GridImage::new(w, h, levels.into_iter().map(|l| range.lo + l as f64 * scale).collect())
}

pub fn load_pgm(path: impl AsRef<Path>, range: IntensityRange) -> Result<GridImage> {
    parse_pgm(&fs::read(path)?, range)
}

/// One line per image row, comma separated, shortest round-trip decimal
/// representation of each value.
pub fn write_csv<W: Write>(img: &GridImage, mut out: W) -> Result<()> {
    for row in img.as_slice().chunks(img.width()) {
        let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}", line.join(","))?;
    }
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<GridImage> {
    let mut data = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (lineno, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split(',')
            .map(|t| {
                t.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parse(format!("line {}: bad number {:?}", lineno + 1, t)))
            })
            .collect::<Result<_>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse(format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    w,
                    row.len()
                )))
            }
            _ => {}
        }
        data.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| Error::Parse("empty CSV image".into()))?;
    GridImage::new(width, height, data)
}

pub fn save_csv(img: &GridImage, path: impl AsRef<Path>) -> Result<()> {
    let mut buf = Vec::new();
    write_csv(img, &mut buf)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<GridImage> {
    read_csv(fs::File::open(path)?)
}

/// Loads by extension: `.pgm` or `.csv`.
pub fn load_image(path: impl AsRef<Path>) -> Result<GridImage> {
    let path = path.as_ref();
    match path.extension().and_then(|e| e.to_str()) {
        Some("pgm") => load_pgm(path, IntensityRange::default()),
        Some("csv") => load_csv(path),
        _ => Err(Error::Parse(format!("unknown image format: {}", path.display()))),
    }
}

/// Every `.pgm`/`.csv` file of a directory, in file-name order.
pub fn load_image_dir(dir: impl AsRef<Path>) -> Result<Vec<GridImage>> {
    let mut paths: Vec<_> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| matches!(p.extension().and_then(|e| e.to_str()), Some("pgm" | "csv")))
        .collect();
    paths.sort();
    paths.iter().map(load_image).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> GridImage {
        GridImage::from_fn(5, 3, |i, j| (i * 5 + j) as f64 / 14.0)
    }

    #[test]
    fn pgm_ascii_and_binary_agree() {
        let img = ramp();
        let mut a = Vec::new();
        let mut b = Vec::new();
        write_pgm(&img, &mut a, PgmFormat::Ascii, IntensityRange::default()).unwrap();
        write_pgm(&img, &mut b, PgmFormat::Binary, IntensityRange::default()).unwrap();
        assert!(a.starts_with(b"P2\n5 3\n255\n0 18 "));
        let ra = parse_pgm(&a, IntensityRange::default()).unwrap();
        let rb = parse_pgm(&b, IntensityRange::default()).unwrap();
        assert_eq!(ra, rb);
        for (x, y) in ra.as_slice().iter().zip(img.as_slice()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn pgm_header_comments_and_custom_range() {
        let text = b"P2\n# made by hand\n2 1\n# max\n10\n0 10\n";
        let img = parse_pgm(text, IntensityRange::new(-1.0, 1.0).unwrap()).unwrap();
        assert_eq!(img.as_slice(), &[-1.0, 1.0]);
    }

    #[test]
    fn pgm_clamps_out_of_range_values() {
        let img = GridImage::new(2, 1, vec![-3.0, 7.0]).unwrap();
        let mut out = Vec::new();
        write_pgm(&img, &mut out, PgmFormat::Ascii, IntensityRange::default()).unwrap();
        assert_eq!(out, b"P2\n2 1\n255\n0 255\n");
    }

    #[test]
    fn pgm_rejects_garbage() {
        assert!(parse_pgm(b"P3\n1 1\n255\n0", IntensityRange::default()).is_err());
        assert!(parse_pgm(b"P2\n2 2\n255\n1 2 3", IntensityRange::default()).is_err());
    }

    #[test]
    fn csv_is_exact() {
        let img = GridImage::from_fn(3, 2, |i, j| 0.1 * i as f64 - 1.0 / (j as f64 + 3.0));
        let mut out = Vec::new();
        write_csv(&img, &mut out).unwrap();
        assert_eq!(read_csv(out.as_slice()).unwrap(), img);
    }

    #[test]
    fn csv_ragged_rows_fail() {
        let err = read_csv("1,2\n3\n".as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 2"));
    }
}
