//! Reconstruction grid, detection geometry and detector directivity.
//!
//! All lengths share one unit; the default setup is a unit detection circle
//! around a `[-1, 1]²` image domain with unit sound speed.

use std::f64::consts::{FRAC_PI_2, TAU};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Square pixel grid over `[-extent, extent]²`.
///
/// Row `i` runs top to bottom (decreasing y), column `j` left to right.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageGrid {
    n: usize,
    extent: f64,
}

impl ImageGrid {
    pub fn new(n: usize, extent: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("grid needs n >= 2, got {n}")));
        }
        if !(extent.is_finite() && extent > 0.0) {
            return Err(Error::Config(format!("grid extent must be positive, got {extent}")));
        }
        Ok(Self { n, extent })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Pixel edge length.
    pub fn spacing(&self) -> f64 {
        2.0 * self.extent / self.n as f64
    }

    pub fn center(&self, row: usize, col: usize) -> [f64; 2] {
        let h = self.spacing();
        [
            -self.extent + (col as f64 + 0.5) * h,
            self.extent - (row as f64 + 0.5) * h,
        ]
    }

    /// Index of the pixel containing `p`, or `None` outside the domain.
    pub fn nearest_index(&self, p: [f64; 2]) -> Option<(usize, usize)> {
        let h = self.spacing();
        let col = ((p[0] + self.extent) / h).floor();
        let row = ((self.extent - p[1]) / h).floor();
        let n = self.n as f64;
        if col < 0.0 || row < 0.0 || col >= n || row >= n {
            return None;
        }
        Some((row as usize, col as usize))
    }

    /// Continuous (row, col) coordinates of a point, such that pixel centers
    /// sit at integer positions.
    pub fn fractional_index(&self, p: [f64; 2]) -> (f64, f64) {
        let h = self.spacing();
        ((self.extent - p[1]) / h - 0.5, (p[0] + self.extent) / h - 0.5)
    }
}

/// Uniform time samples `t_k = k T / n_t`, `k = 1..=n_t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    n_t: usize,
    t_final: f64,
}

impl TimeGrid {
    pub fn new(n_t: usize, t_final: f64) -> Result<Self> {
        if n_t < 2 {
            return Err(Error::Config(format!("time grid needs n_t >= 2, got {n_t}")));
        }
        if !(t_final.is_finite() && t_final > 0.0) {
            return Err(Error::Config(format!("final time must be positive, got {t_final}")));
        }
        Ok(Self { n_t, t_final })
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_t as f64
    }

    /// Sample time for zero-based index `k`.
    pub fn sample(&self, k: usize) -> f64 {
        (k + 1) as f64 * self.t_final / self.n_t as f64
    }

    pub fn samples(&self) -> Vec<f64> {
        (0..self.n_t).map(|k| self.sample(k)).collect()
    }
}

/// Measurement geometry tags.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioLabel {
    /// Detectors on the left half circle.
    LimitedView,
    /// Equidistant detectors on the full circle.
    Sparse,
    /// Few detectors on the left half circle.
    LimitedSparse,
    /// Detectors on a user-chosen arc.
    Custom,
}

impl ScenarioLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            ScenarioLabel::LimitedView => "A_limited_view",
            ScenarioLabel::Sparse => "B_sparse",
            ScenarioLabel::LimitedSparse => "C_limited_sparse",
            ScenarioLabel::Custom => "custom",
        }
    }
}

impl fmt::Display for ScenarioLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ScenarioLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "A" | "A_limited_view" => Ok(ScenarioLabel::LimitedView),
            "B" | "B_sparse" => Ok(ScenarioLabel::Sparse),
            "C" | "C_limited_sparse" => Ok(ScenarioLabel::LimitedSparse),
            "custom" => Ok(ScenarioLabel::Custom),
            other => Err(Error::Config(format!("unknown scenario label '{other}'"))),
        }
    }
}

/// Angular placement of a detector array on its circle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Arc {
    /// `θ_k = 2πk / n_s`.
    FullCircle,
    /// Midpoints of `n_s` equal sub-arcs of `[start, end]` (radians).
    Span { start: f64, end: f64 },
}

/// The left half circle, facing a phantom centred at the origin.
pub const LEFT_HALF: Arc = Arc::Span {
    start: FRAC_PI_2,
    end: 3.0 * FRAC_PI_2,
};

/// Detector positions on a circle of radius `radius` centred at the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectorArray {
    positions: Vec<[f64; 2]>,
    normals: Vec<[f64; 2]>,
    arc_weight: f64,
    radius: f64,
    arc: Arc,
}

impl DetectorArray {
    pub fn new(arc: Arc, n_s: usize, radius: f64) -> Result<Self> {
        if n_s == 0 {
            return Err(Error::Config("detector count must be at least 1".into()));
        }
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::Config(format!("detection radius must be positive, got {radius}")));
        }
        let (angles, arc_weight): (Vec<f64>, f64) = match arc {
            Arc::FullCircle => (
                (0..n_s).map(|k| TAU * k as f64 / n_s as f64).collect(),
                TAU * radius / n_s as f64,
            ),
            Arc::Span { start, end } => {
                if !(start.is_finite() && end.is_finite() && end > start && end - start <= TAU) {
                    return Err(Error::Config(format!(
                        "detector arc [{start}, {end}] must satisfy start < end <= start + 2π"
                    )));
                }
                let step = (end - start) / n_s as f64;
                (
                    (0..n_s).map(|k| start + (k as f64 + 0.5) * step).collect(),
                    step * radius,
                )
            }
        };
        let normals: Vec<[f64; 2]> = angles.iter().map(|a| [a.cos(), a.sin()]).collect();
        let positions = normals.iter().map(|n| [radius * n[0], radius * n[1]]).collect();
        Ok(Self {
            positions,
            normals,
            arc_weight,
            radius,
            arc,
        })
    }

    /// Standard geometry for a scenario label. `Custom` uses the full circle.
    pub fn for_label(label: ScenarioLabel, n_s: usize, radius: f64) -> Result<Self> {
        let arc = match label {
            ScenarioLabel::Sparse | ScenarioLabel::Custom => Arc::FullCircle,
            ScenarioLabel::LimitedView | ScenarioLabel::LimitedSparse => LEFT_HALF,
        };
        Self::new(arc, n_s, radius)
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    pub fn normals(&self) -> &[[f64; 2]] {
        &self.normals
    }

    pub fn arc_weight(&self) -> f64 {
        self.arc_weight
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn arc(&self) -> Arc {
        self.arc
    }
}

/// Detector sensitivity for a ray leaving the detector in direction `ray`.
///
/// `cos α = ⟨-normal, ray⟩`; the result is `cos² α` on the front half-space
/// and zero behind the detector.
pub fn directivity(normal: [f64; 2], ray: [f64; 2]) -> f64 {
    let c = -(normal[0] * ray[0] + normal[1] * ray[1]);
    if c > 0.0 {
        (c * c).min(1.0)
    } else {
        0.0
    }
}

/// Full experimental configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub label: ScenarioLabel,
    pub grid: ImageGrid,
    pub detectors: DetectorArray,
    pub time: TimeGrid,
    pub directivity_enabled: bool,
    pub sound_speed: f64,
    pub seed: u64,
}

impl Scenario {
    pub fn new(
        label: ScenarioLabel,
        grid: ImageGrid,
        detectors: DetectorArray,
        time: TimeGrid,
        directivity_enabled: bool,
        sound_speed: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(sound_speed.is_finite() && sound_speed > 0.0) {
            return Err(Error::Config(format!("sound speed must be positive, got {sound_speed}")));
        }
        let expected = match label {
            ScenarioLabel::LimitedView | ScenarioLabel::LimitedSparse => Some(LEFT_HALF),
            ScenarioLabel::Sparse => Some(Arc::FullCircle),
            ScenarioLabel::Custom => None,
        };
        if let Some(arc) = expected {
            if detectors.arc() != arc {
                return Err(Error::Config(format!(
                    "scenario {label} requires detector arc {arc:?}, got {:?}",
                    detectors.arc()
                )));
            }
        }
        Ok(Self {
            label,
            grid,
            detectors,
            time,
            directivity_enabled,
            sound_speed,
            seed,
        })
    }

    /// Unit-circle setup: `[-1,1]²` grid, radius 1, `T = 3`, `c = 1`,
    /// directivity on.
    pub fn standard(label: ScenarioLabel, n: usize, n_s: usize, n_t: usize) -> Result<Self> {
        Self::new(
            label,
            ImageGrid::new(n, 1.0)?,
            DetectorArray::for_label(label, n_s, 1.0)?,
            TimeGrid::new(n_t, 3.0)?,
            true,
            1.0,
            0,
        )
    }

    /// Largest pixel-center-to-detector distance.
    pub fn max_travel_distance(&self) -> f64 {
        let e = self.grid.extent();
        let corners = [[-e, -e], [-e, e], [e, -e], [e, e]];
        self.detectors
            .positions()
            .iter()
            .flat_map(|s| corners.iter().map(move |c| (c[0] - s[0]).hypot(c[1] - s[1])))
            .fold(0.0, f64::max)
    }
}
