//! Signal vectors and the field they live in.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Which field the unknown signal is known to belong to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FieldTag {
    Real,
    Complex,
    RealNonnegative,
}

impl FieldTag {
    pub fn is_real(self) -> bool {
        !matches!(self, FieldTag::Complex)
    }

    /// Maps an arbitrary complex vector onto the field in place.
    ///
    /// Real fields drop the imaginary part; the nonnegative field also clamps
    /// negative real parts to zero.
    pub fn project(self, v: &mut [Complex64]) {
        match self {
            FieldTag::Complex => {}
            FieldTag::Real => v.iter_mut().for_each(|z| z.im = 0.0),
            FieldTag::RealNonnegative => v.iter_mut().for_each(|z| {
                z.im = 0.0;
                if z.re < 0.0 {
                    z.re = 0.0;
                }
            }),
        }
    }

    /// Drops the imaginary part for real fields. Used on gradients, where the
    /// nonnegativity constraint must not be applied.
    pub fn realify(self, v: &mut [Complex64]) {
        if self.is_real() {
            v.iter_mut().for_each(|z| z.im = 0.0);
        }
    }

    pub fn admits(self, z: Complex64) -> bool {
        match self {
            FieldTag::Complex => true,
            FieldTag::Real => z.im == 0.0,
            FieldTag::RealNonnegative => z.im == 0.0 && z.re >= 0.0,
        }
    }
}

/// The unknown signal `x`, optionally carrying an image shape (row-major).
#[derive(Debug, Clone, PartialEq)]
pub struct SignalVector {
    values: Vec<Complex64>,
    field: FieldTag,
    dims: Option<(usize, usize)>,
}

impl SignalVector {
    pub fn new(values: Vec<Complex64>, field: FieldTag) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("signal must be non-empty".into()));
        }
        if let Some(i) = values.iter().position(|&z| !field.admits(z)) {
            return Err(Error::Domain(format!(
                "entry {i} = {} violates field {field:?}",
                values[i]
            )));
        }
        Ok(Self {
            values,
            field,
            dims: None,
        })
    }

    pub fn from_real(values: &[f64], field: FieldTag) -> Result<Self> {
        Self::new(values.iter().map(|&r| Complex64::new(r, 0.0)).collect(), field)
    }

    /// Builds an image-shaped signal from row-major values.
    pub fn image(values: Vec<Complex64>, field: FieldTag, height: usize, width: usize) -> Result<Self> {
        crate::error::check_len("image values", height * width, values.len())?;
        let mut s = Self::new(values, field)?;
        s.dims = Some((height, width));
        Ok(s)
    }

    /// Projects onto the field instead of rejecting violations.
    pub fn projected(mut values: Vec<Complex64>, field: FieldTag, dims: Option<(usize, usize)>) -> Self {
        field.project(&mut values);
        Self { values, field, dims }
    }

    pub fn zeros(n: usize, field: FieldTag) -> Self {
        Self {
            values: vec![Complex64::new(0.0, 0.0); n],
            field,
            dims: None,
        }
    }

    pub fn with_dims(mut self, dims: Option<(usize, usize)>) -> Self {
        self.dims = dims;
        self
    }

    /// Re-tags the vector, projecting onto the new field.
    pub fn with_field(self, field: FieldTag) -> SignalVector {
        Self::projected(self.values, field, self.dims)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn field(&self) -> FieldTag {
        self.field
    }

    pub fn dims(&self) -> Option<(usize, usize)> {
        self.dims
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }
}

impl AsRef<[Complex64]> for SignalVector {
    fn as_ref(&self) -> &[Complex64] {
        &self.values
    }
}
