//! Terrain heightmaps: ESRI-ASCII-grid-compatible storage, bilinear height
//! interpolation with exact patch gradients, and synthetic map generators.

use std::io::{BufRead, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TerrainError {
    #[error("terrain i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("terrain parse: {0}")]
    Parse(String),
    #[error("terrain query with non-finite coordinates ({0}, {1})")]
    NonFiniteQuery(f64, f64),
    #[error("terrain must be at least 2x2 nodes, got {rows}x{cols}")]
    TooSmall { rows: usize, cols: usize },
    #[error("non-finite height at row {row}, col {col}")]
    NonFiniteHeight { row: usize, col: usize },
}

/// Height samples on a regular grid of nodes. Node (ix, iy) sits at
/// `origin + cell_size * (ix, iy)`; heights are row-major with iy = 0 the
/// southern row (file layout is north-first, flipped on read/write).
#[derive(Debug, Clone, PartialEq)]
pub struct TerrainMap {
    pub origin: [f64; 2],
    pub cell_size: f64,
    ncols: usize,
    nrows: usize,
    heights: Vec<f64>,
}

/// Height/gradient query result; `clamped` marks queries outside the
/// footprint that were clamped to the boundary.
#[derive(Debug, Clone, Copy)]
pub struct TerrainSample {
    pub height: f64,
    pub gradient: [f64; 2],
    pub clamped: bool,
}

impl TerrainMap {
    pub fn new(
        origin: [f64; 2],
        cell_size: f64,
        nrows: usize,
        ncols: usize,
        heights: Vec<f64>,
    ) -> Result<Self, TerrainError> {
        if nrows < 2 || ncols < 2 {
            return Err(TerrainError::TooSmall { rows: nrows, cols: ncols });
        }
        assert!(cell_size > 0.0 && cell_size.is_finite());
        assert_eq!(heights.len(), nrows * ncols);
        for (i, h) in heights.iter().enumerate() {
            if !h.is_finite() {
                return Err(TerrainError::NonFiniteHeight { row: i / ncols, col: i % ncols });
            }
        }
        Ok(Self { origin, cell_size, ncols, nrows, heights })
    }

    pub fn from_fn(
        origin: [f64; 2],
        cell_size: f64,
        nrows: usize,
        ncols: usize,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Self, TerrainError> {
        let mut heights = Vec::with_capacity(nrows * ncols);
        for iy in 0..nrows {
            for ix in 0..ncols {
                let x = origin[0] + cell_size * ix as f64;
                let y = origin[1] + cell_size * iy as f64;
                heights.push(f(x, y));
            }
        }
        Self::new(origin, cell_size, nrows, ncols, heights)
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn node_height(&self, ix: usize, iy: usize) -> f64 {
        self.heights[iy * self.ncols + ix]
    }

    /// Inclusive footprint bounds: (x_min, x_max), (y_min, y_max).
    pub fn footprint(&self) -> ([f64; 2], [f64; 2]) {
        (
            [self.origin[0], self.origin[0] + self.cell_size * (self.ncols - 1) as f64],
            [self.origin[1], self.origin[1] + self.cell_size * (self.nrows - 1) as f64],
        )
    }

    pub fn min_max_height(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &h in &self.heights {
            lo = lo.min(h);
            hi = hi.max(h);
        }
        (lo, hi)
    }

    /// Bilinear height and exact patch gradient at (x, y). On cell edges
    /// the gradient averages the adjacent patches; outside the footprint
    /// the query clamps to the boundary and is flagged.
    pub fn sample(&self, x: f64, y: f64) -> Result<TerrainSample, TerrainError> {
        if !x.is_finite() || !y.is_finite() {
            return Err(TerrainError::NonFiniteQuery(x, y));
        }
        let ([x0, x1], [y0, y1]) = self.footprint();
        let clamped = x < x0 || x > x1 || y < y0 || y > y1;
        let gx = ((x.clamp(x0, x1) - x0) / self.cell_size).clamp(0.0, (self.ncols - 1) as f64);
        let gy = ((y.clamp(y0, y1) - y0) / self.cell_size).clamp(0.0, (self.nrows - 1) as f64);

        let height = self.patch_value(gx, gy);
        // average one-sided patch gradients; they agree at interior points
        let cells_x = self.edge_cells(gx, self.ncols);
        let cells_y = self.edge_cells(gy, self.nrows);
        let mut grad = [0.0f64; 2];
        let mut count = 0.0;
        for &cx in &cells_x {
            for &cy in &cells_y {
                let g = self.patch_gradient(cx, cy, gx, gy);
                grad[0] += g[0];
                grad[1] += g[1];
                count += 1.0;
            }
        }
        grad[0] /= count;
        grad[1] /= count;
        Ok(TerrainSample { height, gradient: grad, clamped })
    }

    pub fn height_at(&self, x: f64, y: f64) -> Result<f64, TerrainError> {
        Ok(self.sample(x, y)?.height)
    }

    /// Cell indices adjacent to grid coordinate g (two on an interior grid
    /// line, one otherwise).
    fn edge_cells(&self, g: f64, n_nodes: usize) -> Vec<usize> {
        let last_cell = n_nodes - 2;
        let i = (g.floor() as usize).min(last_cell);
        if g.fract() == 0.0 && g > 0.0 && (g as usize) <= last_cell {
            vec![g as usize - 1, g as usize]
        } else {
            vec![i]
        }
    }

    fn corners(&self, cx: usize, cy: usize) -> (f64, f64, f64, f64) {
        (
            self.node_height(cx, cy),
            self.node_height(cx + 1, cy),
            self.node_height(cx, cy + 1),
            self.node_height(cx + 1, cy + 1),
        )
    }

    fn patch_value(&self, gx: f64, gy: f64) -> f64 {
        let cx = (gx.floor() as usize).min(self.ncols - 2);
        let cy = (gy.floor() as usize).min(self.nrows - 2);
        let tx = gx - cx as f64;
        let ty = gy - cy as f64;
        let (h00, h10, h01, h11) = self.corners(cx, cy);
        h00 * (1.0 - tx) * (1.0 - ty) + h10 * tx * (1.0 - ty) + h01 * (1.0 - tx) * ty
            + h11 * tx * ty
    }

    fn patch_gradient(&self, cx: usize, cy: usize, gx: f64, gy: f64) -> [f64; 2] {
        let tx = (gx - cx as f64).clamp(0.0, 1.0);
        let ty = (gy - cy as f64).clamp(0.0, 1.0);
        let (h00, h10, h01, h11) = self.corners(cx, cy);
        [
            ((h10 - h00) * (1.0 - ty) + (h11 - h01) * ty) / self.cell_size,
            ((h01 - h00) * (1.0 - tx) + (h11 - h10) * tx) / self.cell_size,
        ]
    }

    /// ESRI ASCII grid (ncols/nrows/xllcorner/yllcorner/cellsize header,
    /// rows north-first).
    pub fn write_ascii<W: Write>(&self, mut w: W) -> Result<(), TerrainError> {
        writeln!(w, "ncols {}", self.ncols)?;
        writeln!(w, "nrows {}", self.nrows)?;
        writeln!(w, "xllcorner {}", self.origin[0])?;
        writeln!(w, "yllcorner {}", self.origin[1])?;
        writeln!(w, "cellsize {}", self.cell_size)?;
        for iy in (0..self.nrows).rev() {
            let row: Vec<String> =
                (0..self.ncols).map(|ix| format!("{:?}", self.node_height(ix, iy))).collect();
            writeln!(w, "{}", row.join(" "))?;
        }
        Ok(())
    }

    pub fn read_ascii<R: BufRead>(r: R) -> Result<Self, TerrainError> {
        let mut tokens: Vec<String> = Vec::new();
        for line in r.lines() {
            tokens.extend(line?.split_whitespace().map(str::to_string));
        }
        let mut i = 0;
        let mut header = std::collections::HashMap::new();
        while i + 1 < tokens.len() {
            let key = tokens[i].to_lowercase();
            if ["ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value"]
                .contains(&key.as_str())
            {
                header.insert(key, tokens[i + 1].clone());
                i += 2;
            } else {
                break;
            }
        }
        let get = |k: &str| {
            header
                .get(k)
                .ok_or_else(|| TerrainError::Parse(format!("missing header field {k}")))
        };
        let ncols: usize = get("ncols")?
            .parse()
            .map_err(|e| TerrainError::Parse(format!("ncols: {e}")))?;
        let nrows: usize = get("nrows")?
            .parse()
            .map_err(|e| TerrainError::Parse(format!("nrows: {e}")))?;
        let xll: f64 = get("xllcorner")?
            .parse()
            .map_err(|e| TerrainError::Parse(format!("xllcorner: {e}")))?;
        let yll: f64 = get("yllcorner")?
            .parse()
            .map_err(|e| TerrainError::Parse(format!("yllcorner: {e}")))?;
        let cell: f64 = get("cellsize")?
            .parse()
            .map_err(|e| TerrainError::Parse(format!("cellsize: {e}")))?;
        let values = &tokens[i..];
        if values.len() != nrows * ncols {
            return Err(TerrainError::Parse(format!(
                "expected {} height values, found {}",
                nrows * ncols,
                values.len()
            )));
        }
        let mut heights = vec![0.0; nrows * ncols];
        for (vi, tok) in values.iter().enumerate() {
            let h: f64 =
                tok.parse().map_err(|e| TerrainError::Parse(format!("height value: {e}")))?;
            // file rows run north to south; storage is south-first
            let file_row = vi / ncols;
            let iy = nrows - 1 - file_row;
            heights[iy * ncols + vi % ncols] = h;
        }
        Self::new([xll, yll], cell, nrows, ncols, heights)
    }

    pub fn save(&self, path: &Path) -> Result<(), TerrainError> {
        let f = std::fs::File::create(path)?;
        self.write_ascii(std::io::BufWriter::new(f))
    }

    pub fn load(path: &Path) -> Result<Self, TerrainError> {
        let f = std::fs::File::open(path)?;
        Self::read_ascii(std::io::BufReader::new(f))
    }
}

/// Synthetic map family for the benchmarks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MapKind {
    /// h = slope-in-x ramp.
    Ramp,
    /// Two identical Gaussian hills on a flat plain (ambiguity scenario).
    TwoHill,
    /// Flat western half, rough (random bumpy) eastern half.
    TwoZone,
}

pub fn generate_map(
    kind: MapKind,
    origin: [f64; 2],
    cell_size: f64,
    nrows: usize,
    ncols: usize,
    seed: u64,
) -> Result<TerrainMap, TerrainError> {
    let w = cell_size * (ncols - 1) as f64;
    let h = cell_size * (nrows - 1) as f64;
    match kind {
        MapKind::Ramp => {
            TerrainMap::from_fn(origin, cell_size, nrows, ncols, |x, _y| 0.1 * (x - origin[0]))
        }
        MapKind::TwoHill => {
            let s = (w.min(h) / 8.0).max(cell_size);
            let c1 = [origin[0] + 0.3 * w, origin[1] + 0.5 * h];
            let c2 = [origin[0] + 0.7 * w, origin[1] + 0.5 * h];
            TerrainMap::from_fn(origin, cell_size, nrows, ncols, |x, y| {
                let hump = |c: [f64; 2]| {
                    let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                    60.0 * (-d2 / (2.0 * s * s)).exp()
                };
                hump(c1) + hump(c2)
            })
        }
        MapKind::TwoZone => {
            // flat west, rough east; roughness is seeded random node noise
            // plus a ridged pattern so gradients are informative everywhere
            let mut rng = ChaCha12Rng::seed_from_u64(seed);
            let mid = origin[0] + 0.5 * w;
            let mut heights = Vec::with_capacity(nrows * ncols);
            for iy in 0..nrows {
                for ix in 0..ncols {
                    let x = origin[0] + cell_size * ix as f64;
                    let y = origin[1] + cell_size * iy as f64;
                    let v = if x < mid {
                        0.0
                    } else {
                        let ridge = 12.0
                            * ((x / (3.0 * cell_size)).sin() + (y / (2.0 * cell_size)).cos());
                        ridge + rng.gen_range(-6.0..6.0)
                    };
                    heights.push(v);
                }
            }
            TerrainMap::new(origin, cell_size, nrows, ncols, heights)
        }
    }
}

/// True when (x, y) lies in the rough (eastern) half of a two-zone map.
pub fn in_rough_zone(map: &TerrainMap, x: f64) -> bool {
    let ([x0, x1], _) = map.footprint();
    x >= 0.5 * (x0 + x1)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp() -> TerrainMap {
        TerrainMap::from_fn([0.0, 0.0], 2.0, 5, 7, |x, _| x).unwrap()
    }

    #[test]
    fn node_query_returns_stored_height() {
        let m = TerrainMap::from_fn([1.0, 2.0], 0.5, 4, 4, |x, y| 3.0 * x - y).unwrap();
        for iy in 0..4 {
            for ix in 0..4 {
                let x = 1.0 + 0.5 * ix as f64;
                let y = 2.0 + 0.5 * iy as f64;
                let s = m.sample(x, y).unwrap();
                assert!((s.height - m.node_height(ix, iy)).abs() < 1e-12);
                assert!(!s.clamped);
            }
        }
    }

    #[test]
    fn cell_center_is_corner_mean() {
        let mut m = TerrainMap::from_fn([0.0, 0.0], 1.0, 2, 2, |_, _| 0.0).unwrap();
        m.heights = vec![1.0, 3.0, 5.0, 7.0];
        let s = m.sample(0.5, 0.5).unwrap();
        assert!((s.height - 4.0).abs() < 1e-12);
    }

    #[test]
    fn ramp_gradient_everywhere() {
        let m = ramp();
        for &x in &[0.0, 0.7, 2.0, 5.3, 11.9, 12.0] {
            for &y in &[0.0, 1.0, 3.7, 8.0] {
                let s = m.sample(x, y).unwrap();
                assert!((s.height - x).abs() < 1e-9, "h at {x},{y}");
                assert!((s.gradient[0] - 1.0).abs() < 1e-9);
                assert!(s.gradient[1].abs() < 1e-9);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = TerrainMap::from_fn([0.0, 0.0], 1.5, 30, 30, |x, y| {
            (0.3 * x).sin() * 4.0 + 0.05 * x * y - (0.2 * y).cos()
        })
        .unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(17);
        let eps = 1e-6;
        for _ in 0..1000 {
            // strictly interior points away from cell edges
            let x = rng.gen_range(1.0..42.0);
            let y = rng.gen_range(1.0..42.0);
            let s = m.sample(x, y).unwrap();
            let fx = (m.height_at(x + eps, y).unwrap() - m.height_at(x - eps, y).unwrap())
                / (2.0 * eps);
            let fy = (m.height_at(x, y + eps).unwrap() - m.height_at(x, y - eps).unwrap())
                / (2.0 * eps);
            // the finite difference may straddle a cell edge where the
            // derivative jumps; allow the coarse tolerance there
            assert!((s.gradient[0] - fx).abs() < 1e-4, "at {x},{y}");
            assert!((s.gradient[1] - fy).abs() < 1e-4, "at {x},{y}");
        }
    }

    #[test]
    fn continuity_across_cell_edges() {
        let m = TerrainMap::from_fn([0.0, 0.0], 1.0, 6, 6, |x, y| x * x - y * x + 2.0 * y).unwrap();
        for &g in &[1.0f64, 2.0, 3.0, 4.0] {
            for &t in &[0.3f64, 0.8] {
                let below = m.height_at(g - 1e-10, t + 1.0).unwrap();
                let above = m.height_at(g + 1e-10, t + 1.0).unwrap();
                assert!((below - above).abs() < 1e-8);
                let south = m.height_at(t + 1.0, g - 1e-10).unwrap();
                let north = m.height_at(t + 1.0, g + 1e-10).unwrap();
                assert!((south - north).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn bilinear_fields_reconstruct_exactly() {
        // a globally bilinear field is reproduced exactly everywhere
        let f = |x: f64, y: f64| 2.0 + 0.5 * x - 1.25 * y + 0.75 * x * y;
        let m = TerrainMap::from_fn([-3.0, 1.0], 0.75, 9, 9, f).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(23);
        let ([x0, x1], [y0, y1]) = m.footprint();
        for _ in 0..500 {
            let x = rng.gen_range(x0..x1);
            let y = rng.gen_range(y0..y1);
            assert!((m.height_at(x, y).unwrap() - f(x, y)).abs() < 1e-9);
        }
    }

    #[test]
    fn outside_footprint_clamps_and_flags() {
        let m = ramp();
        let s = m.sample(-5.0, 2.0).unwrap();
        assert!(s.clamped);
        assert!((s.height - 0.0).abs() < 1e-12);
        let s = m.sample(100.0, 100.0).unwrap();
        assert!(s.clamped);
        assert!((s.height - 12.0).abs() < 1e-12);
        assert!(m.sample(f64::NAN, 0.0).is_err());
    }

    #[test]
    fn ascii_round_trip_bit_exact() {
        let m = generate_map(MapKind::TwoZone, [10.0, -4.0], 2.5, 12, 16, 99).unwrap();
        let mut buf = Vec::new();
        m.write_ascii(&mut buf).unwrap();
        let back = TerrainMap::read_ascii(std::io::BufReader::new(&buf[..])).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn generators_have_expected_shape() {
        let ramp = generate_map(MapKind::Ramp, [0.0, 0.0], 1.0, 8, 8, 0).unwrap();
        assert!(ramp.sample(6.0, 3.0).unwrap().gradient[0] > 0.0);

        let hills = generate_map(MapKind::TwoHill, [0.0, 0.0], 1.0, 41, 41, 0).unwrap();
        let h1 = hills.height_at(12.0, 20.0).unwrap();
        let h2 = hills.height_at(28.0, 20.0).unwrap();
        let edge = hills.height_at(0.0, 0.0).unwrap();
        assert!(h1 > 30.0 && h2 > 30.0 && edge < 1.0);
        assert!((h1 - h2).abs() < 1e-6, "hills must be identical");

        let zones = generate_map(MapKind::TwoZone, [0.0, 0.0], 1.0, 20, 20, 7).unwrap();
        let west = zones.sample(3.0, 10.0).unwrap();
        let east = zones.sample(16.0, 10.0).unwrap();
        assert!(west.gradient[0].abs() + west.gradient[1].abs() < 1e-9);
        assert!(east.gradient[0].abs() + east.gradient[1].abs() > 0.1);
        assert!(!in_rough_zone(&zones, 3.0));
        assert!(in_rough_zone(&zones, 16.0));
        // seeded: same seed reproduces, different seed differs
        let again = generate_map(MapKind::TwoZone, [0.0, 0.0], 1.0, 20, 20, 7).unwrap();
        assert_eq!(zones, again);
        let other = generate_map(MapKind::TwoZone, [0.0, 0.0], 1.0, 20, 20, 8).unwrap();
        assert_ne!(zones, other);
    }
}
