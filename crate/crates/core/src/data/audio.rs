/// Mono waveform.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioBuffer {
    pub sample_rate: u32,
    pub samples: Vec<f64>,
}

impl AudioBuffer {
    pub fn new(sample_rate: u32, samples: Vec<f64>) -> Self {
        Self {
            sample_rate,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f64 {
        peak(&self.samples)
    }
}

pub(crate) fn peak(x: &[f64]) -> f64 {
    x.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// Affine map `y = scale·x + offset` into the network's `[0, 1]` range.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormMeta {
    pub scale: f64,
    pub offset: f64,
}

impl NormMeta {
    pub const IDENTITY: NormMeta = NormMeta {
        scale: 1.0,
        offset: 0.0,
    };

    /// Maps `[−peak, peak]` onto `[0, 1]`; a zero peak gives the identity.
    pub fn from_peak(peak: f64) -> Self {
        if peak > 0.0 && peak.is_finite() {
            Self {
                scale: 1.0 / (2.0 * peak),
                offset: 0.5,
            }
        } else {
            Self::IDENTITY
        }
    }

    pub fn apply(&self, x: f64) -> f64 {
        x * self.scale + self.offset
    }

    pub fn invert(&self, y: f64) -> f64 {
        (y - self.offset) / self.scale
    }

    pub fn apply_all(&self, x: &[f64]) -> Vec<f64> {
        x.iter().map(|&v| self.apply(v)).collect()
    }

    pub fn invert_all(&self, y: &[f64]) -> Vec<f64> {
        y.iter().map(|&v| self.invert(v)).collect()
    }
}

/// `y = x/(2·max|x|) + 0.5`, so `y ∈ [0, 1]` and silence sits at 0.5.
pub fn normalize(x: &[f64]) -> (Vec<f64>, NormMeta) {
    let meta = NormMeta::from_peak(peak(x));
    (meta.apply_all(x), meta)
}
