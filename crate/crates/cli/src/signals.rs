//! True-signal sources and signal files.

use std::io::Write;
use std::path::Path;

use image::{ImageBuffer, Luma};
use num_complex::Complex64;
use poissonpr::{phantom, FieldTag, SignalVector};

use crate::config::{Field, SignalConfig, SignalSource};
use crate::CliError;

/// Grayscale PGM (P2 or P5) scaled to `[0, 1]`, row-major with dims.
pub fn load_pgm(path: &Path) -> Result<(Vec<f64>, usize, usize), CliError> {
    let img = image::ImageReader::open(path)
        .map_err(|e| CliError::Config(format!("cannot open image {}: {e}", path.display())))?
        .with_guessed_format()
        .map_err(|e| CliError::Config(format!("cannot read image {}: {e}", path.display())))?
        .decode()
        .map_err(|e| CliError::Config(format!("cannot decode image {}: {e}", path.display())))?;
    let gray = img.to_luma32f();
    let (w, h) = gray.dimensions();
    let values = gray.pixels().map(|p| f64::from(p.0[0])).collect();
    Ok((values, h as usize, w as usize))
}

/// Writes `|x|` as an 8-bit PGM scaled by its maximum.
pub fn save_pgm(path: &Path, x: &[Complex64], height: usize, width: usize) -> Result<(), CliError> {
    let peak = x.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = if peak > 0.0 { 255.0 / peak } else { 0.0 };
    let img: ImageBuffer<Luma<u8>, Vec<u8>> = ImageBuffer::from_fn(width as u32, height as u32, |j, i| {
        let z = x[i as usize * width + j as usize];
        Luma([(z.norm() * scale).round().clamp(0.0, 255.0) as u8])
    });
    img.save_with_format(path, image::ImageFormat::Pnm)
        .map_err(|e| CliError::Io(format!("cannot write {}: {e}", path.display())))
}

/// Writes one `re,im` line per entry.
pub fn save_csv(path: &Path, x: &[Complex64]) -> Result<(), CliError> {
    let io = |e: std::io::Error| CliError::Io(format!("cannot write {}: {e}", path.display()));
    let mut w = std::io::BufWriter::new(std::fs::File::create(path).map_err(io)?);
    writeln!(w, "re,im").map_err(io)?;
    for z in x {
        writeln!(w, "{:.17e},{:.17e}", z.re, z.im).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn field_tag(f: Field) -> FieldTag {
    match f {
        Field::Nonnegative => FieldTag::RealNonnegative,
        Field::Real => FieldTag::Real,
        Field::Complex => FieldTag::Complex,
    }
}

/// Builds the ground truth; the field defaults to the natural one of the source.
pub fn true_signal(cfg: &SignalConfig, seed: u64) -> Result<SignalVector, CliError> {
    let x = match cfg.source {
        SignalSource::Blocks => {
            if cfg.n < 8 {
                return Err(CliError::Config(format!("blocks pattern needs n >= 8, got {}", cfg.n)));
            }
            phantom::blocks(cfg.n)
        }
        SignalSource::Disk => {
            if cfg.height == 0 || cfg.width == 0 {
                return Err(CliError::Config("disk pattern needs positive height and width".into()));
            }
            phantom::disk(cfg.height, cfg.width)
        }
        SignalSource::RandomComplex => {
            if cfg.n == 0 {
                return Err(CliError::Config("random_complex needs n >= 1".into()));
            }
            phantom::random_complex(cfg.n, seed ^ 0x7275_7468)
        }
        SignalSource::Pgm => {
            let path = cfg.path.as_deref().expect("validated");
            let (v, h, w) = load_pgm(path)?;
            let values = v.into_iter().map(|r| Complex64::new(r, 0.0)).collect();
            SignalVector::image(values, FieldTag::RealNonnegative, h, w)
                .map_err(|e| CliError::Config(format!("image {}: {e}", path.display())))?
        }
    };
    Ok(match cfg.field {
        Some(f) => x.with_field(field_tag(f)),
        None => x,
    })
}
