//! Microphone array geometry, far-field steering, diffuse-noise coherence and
//! superdirective (MVDR against isotropic noise) beamformer design.
//!
//! All phases are referenced to the array centroid.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;
pub const DEFAULT_ARRAY_DIAMETER_M: f64 = 0.072;
pub const DEFAULT_DIAGONAL_LOADING: f64 = 1e-2;
pub const DEFAULT_LOOK_DIRECTIONS: usize = 12;

#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    pub mic_positions: Vec<[f64; 3]>,
    pub speed_of_sound: f64,
}

impl Default for ArrayGeometry {
    /// Six microphones equi-spaced on a 72 mm circle (indices 0..6, mic 0 on
    /// the +x axis) plus one at the centre (index 6).
    fn default() -> Self {
        let r = DEFAULT_ARRAY_DIAMETER_M / 2.0;
        let mut mic_positions: Vec<[f64; 3]> = (0..6)
            .map(|i| {
                let a = i as f64 * PI / 3.0;
                [r * a.cos(), r * a.sin(), 0.0]
            })
            .collect();
        mic_positions.push([0.0, 0.0, 0.0]);
        Self {
            mic_positions,
            speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        }
    }
}

impl ArrayGeometry {
    pub fn new(mic_positions: Vec<[f64; 3]>, speed_of_sound: f64) -> Result<Self> {
        if mic_positions.is_empty() {
            return Err(Error::InvalidConfig("array needs at least one microphone".into()));
        }
        if mic_positions.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("microphone positions must be finite".into()));
        }
        if !(speed_of_sound.is_finite() && speed_of_sound > 0.0) {
            return Err(Error::InvalidConfig("speed of sound must be positive".into()));
        }
        Ok(Self {
            mic_positions,
            speed_of_sound,
        })
    }

    /// Parses whitespace separated `x y z` rows in meters. Blank lines and
    /// lines starting with `#` are ignored.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut mics = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let vals: Vec<f64> = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::Format(format!("geometry line {}: {e}", lineno + 1)))?;
            if vals.len() != 3 {
                return Err(Error::Format(format!(
                    "geometry line {}: expected 3 coordinates, got {}",
                    lineno + 1,
                    vals.len()
                )));
            }
            mics.push([vals[0], vals[1], vals[2]]);
        }
        Self::new(mics, DEFAULT_SPEED_OF_SOUND)
    }

    pub fn num_mics(&self) -> usize {
        self.mic_positions.len()
    }

    pub fn centroid(&self) -> [f64; 3] {
        let n = self.mic_positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.mic_positions {
            for i in 0..3 {
                c[i] += p[i] / n;
            }
        }
        c
    }

    /// Positions relative to the centroid.
    pub fn centered_positions(&self) -> Vec<[f64; 3]> {
        let c = self.centroid();
        self.mic_positions
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect()
    }

    pub fn distance(&self, i: usize, j: usize) -> f64 {
        dist(&self.mic_positions[i], &self.mic_positions[j])
    }

    /// Sub-array made of the listed microphones.
    pub fn subset(&self, mics: &[usize]) -> Result<Self> {
        let pos = mics
            .iter()
            .map(|&m| {
                self.mic_positions
                    .get(m)
                    .copied()
                    .ok_or_else(|| Error::InvalidConfig(format!("mic {m} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(pos, self.speed_of_sound)
    }

    /// Far-field propagation delays in seconds relative to the centroid:
    /// `tau_m = -(u . r_m) / c`, negative for mics closer to the source.
    pub fn delays(&self, direction: &LookDirection) -> Vec<f64> {
        let u = direction.unit_vector();
        self.centered_positions()
            .iter()
            .map(|r| -(u[0] * r[0] + u[1] * r[1] + u[2] * r[2]) / self.speed_of_sound)
            .collect()
    }
}

fn dist(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LookDirection {
    azimuth: f64,
    pub elevation: f64,
}

impl LookDirection {
    pub fn new(azimuth: f64, elevation: f64) -> Self {
        let mut az = azimuth.rem_euclid(2.0 * PI);
        if az >= 2.0 * PI {
            az = 0.0;
        }
        Self { azimuth: az, elevation }
    }

    pub fn from_degrees(azimuth_deg: f64) -> Self {
        Self::new(azimuth_deg.to_radians(), 0.0)
    }

    pub fn azimuth(&self) -> f64 {
        self.azimuth
    }

    /// Unit vector pointing from the array towards the source.
    pub fn unit_vector(&self) -> [f64; 3] {
        let (ce, se) = (self.elevation.cos(), self.elevation.sin());
        [ce * self.azimuth.cos(), ce * self.azimuth.sin(), se]
    }

    /// `count` directions at equal azimuth spacing starting at 0, elevation 0.
    pub fn uniform(count: usize) -> Vec<LookDirection> {
        (0..count)
            .map(|i| LookDirection::new(2.0 * PI * i as f64 / count as f64, 0.0))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(pub Vec<Complex64>);

impl SteeringVector {
    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }
}

pub fn steering_vector(geometry: &ArrayGeometry, direction: &LookDirection, omega: f64) -> SteeringVector {
    SteeringVector(
        geometry
            .delays(direction)
            .into_iter()
            .map(|tau| Complex64::from_polar(1.0, -omega * tau))
            .collect(),
    )
}

/// Unnormalised sinc, `sin(x)/x` with `sinc(0) = 1`.
pub fn sinc(x: f64) -> f64 {
    if x.abs() < 1e-12 {
        1.0 - x * x / 6.0
    } else {
        x.sin() / x
    }
}

/// Spherically isotropic noise coherence, `sin(w d_ij / c) / (w d_ij / c)`.
pub fn diffuse_coherence(geometry: &ArrayGeometry, omega: f64) -> DMatrix<f64> {
    let m = geometry.num_mics();
    DMatrix::from_fn(m, m, |i, j| {
        if i == j {
            1.0
        } else {
            sinc(omega * geometry.distance(i, j) / geometry.speed_of_sound)
        }
    })
}

/// Picks the perimeter pair whose connecting segment passes closest to the
/// centroid; ties prefer the wider pair, then the lowest indices.
pub fn select_diagonal_pair(geometry: &ArrayGeometry) -> Result<(usize, usize)> {
    let c = geometry.centroid();
    let perimeter: Vec<usize> = (0..geometry.num_mics())
        .filter(|&i| dist(&geometry.mic_positions[i], &c) > 1e-9)
        .collect();
    if perimeter.len() < 2 {
        return Err(Error::InvalidConfig(
            "need at least two microphones off the centroid".into(),
        ));
    }
    const TOL: f64 = 1e-9;
    let mut best: Option<(usize, usize, f64, f64)> = None;
    for (a, &i) in perimeter.iter().enumerate() {
        for &j in &perimeter[a + 1..] {
            let off = point_segment_distance(&c, &geometry.mic_positions[i], &geometry.mic_positions[j]);
            let sep = geometry.distance(i, j);
            let better = match best {
                None => true,
                Some((_, _, bo, bs)) => off < bo - TOL || ((off - bo).abs() <= TOL && sep > bs + TOL),
            };
            if better {
                best = Some((i, j, off, sep));
            }
        }
    }
    let (i, j, _, _) = best.expect("at least one pair");
    Ok((i, j))
}

fn point_segment_distance(p: &[f64; 3], a: &[f64; 3], b: &[f64; 3]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
    let ap = [p[0] - a[0], p[1] - a[1], p[2] - a[2]];
    let len2 = ab.iter().map(|v| v * v).sum::<f64>();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (ap.iter().zip(&ab).map(|(x, y)| x * y).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    let q = [a[0] + t * ab[0], a[1] + t * ab[1], a[2] + t * ab[2]];
    dist(p, &q)
}

/// Superdirective weights laid out `[bin][direction][mic]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperdirectiveWeights {
    pub mics: usize,
    pub directions: usize,
    pub bins: usize,
    pub diagonal_loading: f64,
    pub weights: Vec<Complex64>,
}

impl SuperdirectiveWeights {
    pub fn weight_vector(&self, bin: usize, direction: usize) -> &[Complex64] {
        let start = (bin * self.directions + direction) * self.mics;
        &self.weights[start..start + self.mics]
    }
}

/// `w = (G + s I)^-1 v / (v^H (G + s I)^-1 v)` for every bin and direction.
pub fn superdirective_weights(
    geometry: &ArrayGeometry,
    directions: &[LookDirection],
    omegas: &[f64],
    sigma2: f64,
) -> Result<SuperdirectiveWeights> {
    if !(sigma2 >= 0.0 && sigma2.is_finite()) {
        return Err(Error::InvalidConfig(format!("diagonal loading {sigma2} must be >= 0")));
    }
    let m = geometry.num_mics();
    let mut weights = Vec::with_capacity(omegas.len() * directions.len() * m);
    for &omega in omegas {
        let gamma = diffuse_coherence(geometry, omega);
        let loaded = DMatrix::from_fn(m, m, |i, j| {
            Complex64::new(gamma[(i, j)] + if i == j { sigma2 } else { 0.0 }, 0.0)
        });
        let lu = loaded.lu();
        let u = lu.u();
        let diag: Vec<f64> = (0..m).map(|i| u[(i, i)].norm()).collect();
        let max = diag.iter().cloned().fold(0.0, f64::max);
        if diag.iter().any(|&d| d <= 1e-13 * max.max(1.0)) {
            return Err(Error::SingularCoherence { omega });
        }
        for dir in directions {
            let v = steering_vector(geometry, dir, omega);
            let rhs = nalgebra::DVector::from_column_slice(&v.0);
            let x = lu.solve(&rhs).ok_or(Error::SingularCoherence { omega })?;
            let denom: Complex64 = v.0.iter().zip(x.iter()).map(|(a, b)| a.conj() * b).sum();
            if !(denom.norm() > 0.0 && denom.norm().is_finite()) {
                return Err(Error::SingularCoherence { omega });
            }
            weights.extend(x.iter().map(|xi| xi / denom));
        }
    }
    Ok(SuperdirectiveWeights {
        mics: m,
        directions: directions.len(),
        bins: omegas.len(),
        diagonal_loading: sigma2,
        weights,
    })
}

/// `|w^H v|`.
pub fn response(weights: &[Complex64], steering: &SteeringVector) -> Complex64 {
    weights.iter().zip(&steering.0).map(|(w, v)| w.conj() * v).sum()
}

/// Power gain `|w^H v(theta)|^2` over an azimuth grid (elevation 0).
pub fn beampattern(weights: &[Complex64], geometry: &ArrayGeometry, omega: f64, azimuths: &[f64]) -> Vec<f64> {
    azimuths
        .iter()
        .map(|&az| response(weights, &steering_vector(geometry, &LookDirection::new(az, 0.0), omega)).norm_sqr())
        .collect()
}

/// White noise gain `||w||^2`.
pub fn white_noise_gain(weights: &[Complex64]) -> f64 {
    weights.iter().map(|w| w.norm_sqr()).sum()
}
