use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{Graph, Tensor, Var};

/// Per-pixel depth with a validity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthMap {
    height: usize,
    width: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DepthMap {
    /// Pixels with a finite, strictly positive depth are valid.
    pub fn new(height: usize, width: usize, values: Vec<f64>) -> Result<Self> {
        let valid = values.iter().map(|d| d.is_finite() && *d > 0.0).collect();
        Self::with_mask(height, width, values, valid)
    }

    pub fn with_mask(
        height: usize,
        width: usize,
        values: Vec<f64>,
        valid: Vec<bool>,
    ) -> Result<Self> {
        if values.len() != height * width || valid.len() != values.len() {
            return Err(Error::Shape(format!(
                "depth map {height}x{width} got {} values and {} mask entries",
                values.len(),
                valid.len()
            )));
        }
        if let Some(i) =
            (0..values.len()).find(|&i| valid[i] && !(values[i].is_finite() && values[i] > 0.0))
        {
            return Err(Error::Data(format!(
                "valid depth must be positive, pixel {i} has {}",
                values[i]
            )));
        }
        Ok(Self {
            height,
            width,
            values,
            valid,
        })
    }

    pub fn filled(height: usize, width: usize, depth: f64) -> Result<Self> {
        Self::new(height, width, vec![depth; height * width])
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid(&self) -> &[bool] {
        &self.valid
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    pub fn is_valid(&self, row: usize, col: usize) -> bool {
        self.valid[row * self.width + col]
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Invalidates pixels deeper than `max_depth`.
    pub fn limited(mut self, max_depth: f64) -> Self {
        for (v, d) in self.valid.iter_mut().zip(&self.values) {
            *v &= *d <= max_depth;
        }
        self
    }

    /// Multiplies every depth by `s > 0`.
    pub fn scaled(&self, s: f64) -> Self {
        Self {
            values: self.values.iter().map(|d| d * s).collect(),
            ..self.clone()
        }
    }

    /// `[1, 1, H, W]` tensor of the raw values.
    pub fn to_tensor(&self) -> Tensor {
        Tensor::new([1, 1, self.height, self.width], self.values.clone())
            .expect("depth map dimensions are consistent")
    }

    /// Builds from a `[..., H, W]` tensor holding a single map.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let s = t.shape();
        if s.len() < 2 || s[..s.len() - 2].iter().product::<usize>() != 1 {
            return Err(Error::Shape(format!(
                "expected a single depth map, got {s:?}"
            )));
        }
        Self::new(s[s.len() - 2], s[s.len() - 1], t.data().to_vec())
    }
}

/// Disparity (inverse depth) range spanned by the generator's `tanh` output.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisparityRange {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DisparityRange {
    fn default() -> Self {
        Self {
            d_min: 0.01,
            d_max: 10.0,
        }
    }
}

impl DisparityRange {
    pub fn validate(&self) -> Result<()> {
        if !(self.d_min > 0.0 && self.d_max > self.d_min && self.d_max.is_finite()) {
            return Err(Error::Config(format!(
                "disparity range needs 0 < d_min < d_max, got [{}, {}]",
                self.d_min, self.d_max
            )));
        }
        Ok(())
    }

    /// Depth for a raw value in `[-1, 1]`.
    #[inline]
    pub fn depth(&self, raw: f64) -> f64 {
        1.0 / self.disparity(raw)
    }

    #[inline]
    pub fn disparity(&self, raw: f64) -> f64 {
        self.d_min + (raw + 1.0) * 0.5 * (self.d_max - self.d_min)
    }

    pub fn min_depth(&self) -> f64 {
        1.0 / self.d_max
    }

    pub fn max_depth(&self) -> f64 {
        1.0 / self.d_min
    }
}

fn check_raw(raw: &Tensor) -> Result<()> {
    if let Some(v) = raw.data().iter().find(|v| !(-1.0..=1.0).contains(*v)) {
        return Err(Error::Numeric(format!("raw disparity {v} outside [-1, 1]")));
    }
    Ok(())
}

/// Maps a raw `tanh` map to depth: disparity is affine in the raw value,
/// depth is its reciprocal.
pub fn disparity_to_depth(raw: &Tensor, range: DisparityRange) -> Result<DepthMap> {
    range.validate()?;
    check_raw(raw)?;
    DepthMap::from_tensor(&raw.map(|r| range.depth(r)))
}

impl Graph {
    /// Differentiable [`disparity_to_depth`] over any tensor shape.
    pub fn disparity_to_depth(&mut self, raw: Var, range: DisparityRange) -> Result<Var> {
        range.validate()?;
        check_raw(self.value(raw))?;
        let out = self.value(raw).map(|r| range.depth(r));
        let half_span = 0.5 * (range.d_max - range.d_min);
        self.record_fn("disparity_to_depth", out, &[raw], move |ctx| {
            // d(1/disp)/draw = -depth^2 * half_span
            let g = ctx
                .output
                .zip_map(ctx.grad, |depth, g| -g * depth * depth * half_span)?;
            Ok(vec![Some(g)])
        })
    }
}
