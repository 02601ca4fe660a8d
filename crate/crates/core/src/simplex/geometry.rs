use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Result, SimplexError, SimplexGrid};
use crate::returns::WeightVector;

/// Relative area below which a triangle counts as degenerate.
const DEGENERACY_RATIO: f64 = 1e-12;

/// Lengths of the three sides, each named by the vertices it joins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SideLengths {
    pub sigma_h: f64,
    pub r_h: f64,
    pub r_sigma: f64,
}

impl SideLengths {
    pub fn perimeter(&self) -> f64 {
        self.sigma_h + self.r_h + self.r_sigma
    }
}

/// Triangle spanned by the return, volatility and Hurst optima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalTriangle {
    pub w_r: WeightVector,
    pub w_sigma: WeightVector,
    pub w_h: WeightVector,
    pub side_lengths: SideLengths,
    pub interval_days: Option<usize>,
}

impl OptimalTriangle {
    pub fn new(
        w_r: WeightVector,
        w_sigma: WeightVector,
        w_h: WeightVector,
        interval_days: Option<usize>,
    ) -> Result<Self> {
        let side_lengths = SideLengths {
            sigma_h: weight_distance(&w_sigma, &w_h)?,
            r_h: weight_distance(&w_r, &w_h)?,
            r_sigma: weight_distance(&w_r, &w_sigma)?,
        };
        Ok(Self {
            w_r,
            w_sigma,
            w_h,
            side_lengths,
            interval_days,
        })
    }

    pub fn dimension(&self) -> usize {
        self.w_r.len()
    }

    pub fn vertices(&self) -> [&WeightVector; 3] {
        [&self.w_r, &self.w_sigma, &self.w_h]
    }

    /// Area from the Gram determinant of two edge vectors.
    pub fn area(&self) -> f64 {
        let u = diff(&self.w_sigma, &self.w_r);
        let v = diff(&self.w_h, &self.w_r);
        let (uu, vv, uv) = (dot(&u, &u), dot(&v, &v), dot(&u, &v));
        0.5 * (uu * vv - uv * uv).max(0.0).sqrt()
    }

    pub fn is_degenerate(&self) -> bool {
        let p = self.side_lengths.perimeter();
        p == 0.0 || self.area() <= DEGENERACY_RATIO * p * p
    }
}

fn diff(a: &WeightVector, b: &WeightVector) -> Vec<f64> {
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x - y).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_len(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(SimplexError::DimensionMismatch { expected, actual });
    }
    Ok(())
}

/// Euclidean distance between two weight vectors.
pub fn weight_distance(a: &WeightVector, b: &WeightVector) -> Result<f64> {
    check_len(a.len(), b.len())?;
    Ok(a.as_slice()
        .iter()
        .zip(b.as_slice())
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt())
}

fn combine(weights: [f64; 3], tri: &OptimalTriangle) -> Result<WeightVector> {
    let total: f64 = weights.iter().sum();
    let n = tri.dimension();
    let mut out = vec![0.0; n];
    for (c, v) in weights.iter().zip(tri.vertices()) {
        for (o, x) in out.iter_mut().zip(v.as_slice()) {
            *o += c / total * x;
        }
    }
    Ok(WeightVector::new(out)?)
}

/// Mean of the three vertices.
pub fn centroid(tri: &OptimalTriangle) -> WeightVector {
    combine([1.0; 3], tri).expect("a convex combination of simplex points stays on the simplex")
}

/// Vertices weighted by the length of the opposite side.
pub fn incenter(tri: &OptimalTriangle) -> Result<WeightVector> {
    if tri.is_degenerate() {
        return Err(SimplexError::DegenerateTriangle);
    }
    let d = tri.side_lengths;
    combine([d.sigma_h, d.r_h, d.r_sigma], tri)
}

/// Divisor applied to the perimeter in Heron's formula.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeronMode {
    /// `s = P/2`, the usual semi-perimeter.
    #[default]
    Standard,
    /// `s = P/3`, kept for comparison; never a valid Heron semi-perimeter.
    Third,
}

impl HeronMode {
    pub fn divisor(self) -> f64 {
        match self {
            HeronMode::Standard => 2.0,
            HeronMode::Third => 3.0,
        }
    }
}

impl FromStr for HeronMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "standard" => Ok(HeronMode::Standard),
            "third" => Ok(HeronMode::Third),
            other => Err(format!("unknown Heron mode '{other}' (expected standard or third)")),
        }
    }
}

impl fmt::Display for HeronMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            HeronMode::Standard => "standard",
            HeronMode::Third => "third",
        })
    }
}

/// `(s−a)(s−b)(s−c)/s` for the given side lengths.
pub fn heron_radicand(sides: &SideLengths, mode: HeronMode) -> (f64, f64) {
    let s = sides.perimeter() / mode.divisor();
    let r = (s - sides.sigma_h) * (s - sides.r_h) * (s - sides.r_sigma) / s;
    (s, r)
}

/// Inscribed circle radius `sqrt((s−a)(s−b)(s−c)/s)`.
///
/// Every factor `s − side` must be positive. With `s = P/3` the longest side
/// always breaks this, whatever the sign of the product.
pub fn incircle_radius(tri: &OptimalTriangle, mode: HeronMode) -> Result<f64> {
    if tri.is_degenerate() {
        return Err(SimplexError::DegenerateTriangle);
    }
    let d = tri.side_lengths;
    let (semi_perimeter, radicand) = heron_radicand(&d, mode);
    if radicand < 0.0 {
        return Err(SimplexError::NegativeRadicand {
            semi_perimeter,
            radicand,
        });
    }
    if let Some(side) = [d.sigma_h, d.r_h, d.r_sigma]
        .into_iter()
        .find(|x| semi_perimeter - x <= 0.0)
    {
        return Err(SimplexError::InvalidHeronFactor {
            semi_perimeter,
            side,
            factor: semi_perimeter - side,
            radicand,
        });
    }
    Ok(radicand.sqrt())
}

/// Sum of distances from `w` to the three vertices.
pub fn vertex_distance_sum(w: &WeightVector, tri: &OptimalTriangle) -> Result<f64> {
    tri.vertices().into_iter().map(|v| weight_distance(w, v)).sum()
}

/// Lattice point with the smallest total distance to the three vertices.
pub fn fermat_point(tri: &OptimalTriangle, grid: &SimplexGrid) -> Result<WeightVector> {
    check_len(tri.dimension(), grid.dimension())?;
    let verts: Vec<&[f64]> = tri.vertices().iter().map(|v| v.as_slice()).collect();
    let (w, _) = grid
        .argmax(|w| {
            let total: f64 = verts
                .iter()
                .map(|v| w.iter().zip(*v).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
                .sum();
            Some(-total)
        })
        .expect("grid is non-empty");
    Ok(w)
}

/// Least-squares barycentric coordinates of a point against a triangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Barycentric {
    /// Coefficients on `w_R`, `w_σ`, `w_H`; they sum to one.
    pub coords: [f64; 3],
    /// Distance from the point to the plane of the triangle.
    pub residual: f64,
}

pub fn barycentric(w: &WeightVector, tri: &OptimalTriangle) -> Result<Barycentric> {
    check_len(tri.dimension(), w.len())?;
    if tri.is_degenerate() {
        return Err(SimplexError::DegenerateTriangle);
    }
    let u = diff(&tri.w_sigma, &tri.w_r);
    let v = diff(&tri.w_h, &tri.w_r);
    let d = diff(w, &tri.w_r);
    let (uu, vv, uv) = (dot(&u, &u), dot(&v, &v), dot(&u, &v));
    let (ud, vd) = (dot(&u, &d), dot(&v, &d));
    let det = uu * vv - uv * uv;
    let beta = (vv * ud - uv * vd) / det;
    let gamma = (uu * vd - uv * ud) / det;
    let residual = d
        .iter()
        .zip(u.iter().zip(&v))
        .map(|(di, (ui, vi))| (di - beta * ui - gamma * vi).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(Barycentric {
        coords: [1.0 - beta - gamma, beta, gamma],
        residual,
    })
}

/// Whether `w` lies in the closed triangle, up to `tol`.
pub fn triangle_membership(w: &WeightVector, tri: &OptimalTriangle, tol: f64) -> Result<bool> {
    let b = barycentric(w, tri)?;
    Ok(b.coords.iter().all(|c| *c >= -tol) && b.residual <= tol)
}

/// Whether `w` lies in every triangle of the list.
pub fn effective_subspace_membership(w: &WeightVector, triangles: &[OptimalTriangle], tol: f64) -> Result<bool> {
    for tri in triangles {
        if !triangle_membership(w, tri, tol)? {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Lattice points inside every triangle; empty when the triangles share no
/// grid point.
pub fn effective_subspace_points(
    grid: &SimplexGrid,
    triangles: &[OptimalTriangle],
    tol: f64,
) -> Result<Vec<WeightVector>> {
    let mut out = Vec::new();
    for w in grid.points() {
        if effective_subspace_membership(&w, triangles, tol)? {
            out.push(w);
        }
    }
    Ok(out)
}

/// Per-component spread of each averaged vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VertexSpread {
    pub w_r: Vec<f64>,
    pub w_sigma: Vec<f64>,
    pub w_h: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AveragedTriangle {
    pub triangle: OptimalTriangle,
    /// Sample standard deviation across triangles (zero for a single one).
    pub std_dev: VertexSpread,
    /// `std_dev / sqrt(count)`.
    pub std_err: VertexSpread,
    pub count: usize,
}

/// Component-wise mean and spread of a list of weight vectors.
pub fn mean_and_spread(ws: &[&WeightVector]) -> Result<(WeightVector, Vec<f64>)> {
    let first = ws.first().ok_or(SimplexError::EmptyTriangleList)?;
    let n = first.len();
    let k = ws.len() as f64;
    let mut mean = vec![0.0; n];
    for w in ws {
        check_len(n, w.len())?;
        for (m, x) in mean.iter_mut().zip(w.as_slice()) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= k);
    let sd = (0..n)
        .map(|i| {
            if ws.len() < 2 {
                return 0.0;
            }
            let ss: f64 = ws.iter().map(|w| (w[i] - mean[i]).powi(2)).sum();
            (ss / (k - 1.0)).sqrt()
        })
        .collect();
    Ok((WeightVector::new(mean)?, sd))
}

/// Averages each vertex across triangles and rebuilds the side lengths.
pub fn average_local_weights(triangles: &[OptimalTriangle]) -> Result<AveragedTriangle> {
    if triangles.is_empty() {
        return Err(SimplexError::EmptyTriangleList);
    }
    let pick = |f: fn(&OptimalTriangle) -> &WeightVector| -> Result<(WeightVector, Vec<f64>)> {
        mean_and_spread(&triangles.iter().map(f).collect::<Vec<_>>())
    };
    let (w_r, sd_r) = pick(|t| &t.w_r)?;
    let (w_sigma, sd_sigma) = pick(|t| &t.w_sigma)?;
    let (w_h, sd_h) = pick(|t| &t.w_h)?;
    let root = (triangles.len() as f64).sqrt();
    let se = |v: &[f64]| v.iter().map(|x| x / root).collect::<Vec<_>>();
    let std_err = VertexSpread {
        w_r: se(&sd_r),
        w_sigma: se(&sd_sigma),
        w_h: se(&sd_h),
    };
    Ok(AveragedTriangle {
        triangle: OptimalTriangle::new(w_r, w_sigma, w_h, None)?,
        std_dev: VertexSpread {
            w_r: sd_r,
            w_sigma: sd_sigma,
            w_h: sd_h,
        },
        std_err,
        count: triangles.len(),
    })
}

/// Global-optimum candidates derived from a triangle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalOptimum {
    pub centroid: WeightVector,
    /// Absent for a degenerate triangle.
    pub incenter: Option<WeightVector>,
    /// Absent for a degenerate triangle or a negative radicand.
    pub incircle_radius: Option<f64>,
    pub fermat: WeightVector,
    pub heron_mode: HeronMode,
    /// Why the incenter or radius is missing.
    pub notes: Vec<String>,
}

pub fn global_optimum(tri: &OptimalTriangle, grid: &SimplexGrid, mode: HeronMode) -> Result<GlobalOptimum> {
    let mut notes = Vec::new();
    let incenter = match incenter(tri) {
        Ok(w) => Some(w),
        Err(e) => {
            notes.push(format!("incenter: {e}"));
            None
        }
    };
    let incircle_radius = match incircle_radius(tri, mode) {
        Ok(r) => Some(r),
        Err(e) => {
            notes.push(format!("incircle radius: {e}"));
            None
        }
    };
    Ok(GlobalOptimum {
        centroid: centroid(tri),
        incenter,
        incircle_radius,
        fermat: fermat_point(tri, grid)?,
        heron_mode: mode,
        notes,
    })
}
