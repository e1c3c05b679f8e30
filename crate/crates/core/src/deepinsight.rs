//! Feature-to-pixel layout: embed the train matrix's features as points in
//! 2-D by similarity, rotate the cloud to its minimum-area bounding
//! rectangle, discretize onto a small grid, and render each row as a
//! grayscale image (cell value = mean of min-max-normalized features assigned
//! to that cell).
//!
//! Two projectors are available: an exact t-SNE (the default) and a
//! deterministic PCA via the Gram-matrix trick. Both treat features as
//! points whose coordinates are the train rows, so the layout is a pure
//! function of train data and seed.

use ndarray::{Array2, Array3, ArrayView1, ArrayView2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Projector {
    Tsne,
    Pca,
}

/// Fitted assignment of every feature to one grid cell, plus the embedding
/// state that produced it and the train-split intensity bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PixelMap {
    pub grid_h: usize,
    pub grid_w: usize,
    /// Per-feature (row, col) cell.
    pub assignment: Vec<(usize, usize)>,
    /// Rotated 2-D embedding of each feature.
    pub embedding: Vec<(f64, f64)>,
    /// Rotation (radians) that aligned the cloud to its min-area rectangle.
    pub rotation: f64,
    pub projector: Projector,
    pub seed: u64,
    pub fit_split: String,
    /// Per-feature min/max over the train encoding, for pixel intensities.
    pub feat_min: Vec<f64>,
    pub feat_max: Vec<f64>,
    /// True when the projector degenerated and the deterministic
    /// schema-order fallback layout was used.
    pub fallback: bool,
}

/// Fit the pixel layout on the train split's encoded matrix.
pub fn fit_pixel_map(
    train_encoded: ArrayView2<'_, f64>,
    grid: (usize, usize),
    seed: u64,
    projector: Projector,
) -> Result<PixelMap> {
    let (grid_h, grid_w) = grid;
    let n_features = train_encoded.ncols();
    if n_features < 2 {
        return Err(Error::invalid(format!(
            "pixel layout needs at least 2 features, got {n_features}"
        )));
    }
    if grid_h == 0 || grid_w == 0 {
        return Err(Error::invalid("grid dimensions must be positive"));
    }
    if train_encoded.nrows() == 0 {
        return Err(Error::invalid("cannot fit pixel layout on an empty matrix"));
    }

    // Features as points, rows as coordinates.
    let points = train_encoded.t().to_owned();
    let degenerate = max_pairwise_sq_dist(&points) < 1e-24;

    let (embedding, rotation, fallback) = if degenerate {
        log::warn!("all features identical on train; using schema-order grid fallback");
        (vec![(0.0, 0.0); n_features], 0.0, true)
    } else {
        let raw = match projector {
            Projector::Pca => pca_2d(&points),
            Projector::Tsne => tsne_2d(&points, seed),
        };
        if raw.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            log::warn!("projector produced non-finite embedding; using schema-order fallback");
            (vec![(0.0, 0.0); n_features], 0.0, true)
        } else {
            let angle = min_area_rect_angle(&raw);
            let rotated = rotate_points(&raw, -angle);
            (rotated, angle, false)
        }
    };

    let assignment = if fallback {
        fallback_assignment(n_features, grid_h, grid_w)
    } else {
        discretize(&embedding, grid_h, grid_w)
    };

    let mut feat_min = vec![f64::INFINITY; n_features];
    let mut feat_max = vec![f64::NEG_INFINITY; n_features];
    for row in train_encoded.rows() {
        for (f, &v) in row.iter().enumerate() {
            feat_min[f] = feat_min[f].min(v);
            feat_max[f] = feat_max[f].max(v);
        }
    }

    Ok(PixelMap {
        grid_h,
        grid_w,
        assignment,
        embedding,
        rotation,
        projector,
        seed,
        fit_split: "train".to_string(),
        feat_min,
        feat_max,
        fallback,
    })
}

impl PixelMap {
    pub fn n_features(&self) -> usize {
        self.assignment.len()
    }

    /// Render one encoded row as a [grid_h, grid_w] image in [0, 1].
    pub fn render(&self, row: ArrayView1<'_, f64>) -> Result<Array2<f64>> {
        if row.len() != self.n_features() {
            return Err(Error::shape(format!(
                "row length {} != fitted feature count {}",
                row.len(),
                self.n_features()
            )));
        }
        let mut sum = Array2::<f64>::zeros((self.grid_h, self.grid_w));
        let mut count = Array2::<f64>::zeros((self.grid_h, self.grid_w));
        for (f, &v) in row.iter().enumerate() {
            let (r, c) = self.assignment[f];
            let range = self.feat_max[f] - self.feat_min[f];
            let norm = if range > 0.0 {
                ((v - self.feat_min[f]) / range).clamp(0.0, 1.0)
            } else {
                0.0
            };
            sum[[r, c]] += norm;
            count[[r, c]] += 1.0;
        }
        let mut img = Array2::zeros((self.grid_h, self.grid_w));
        for r in 0..self.grid_h {
            for c in 0..self.grid_w {
                if count[[r, c]] > 0.0 {
                    img[[r, c]] = (sum[[r, c]] / count[[r, c]]).clamp(0.0, 1.0);
                }
            }
        }
        Ok(img)
    }

    /// Render every row of an encoded matrix; order-preserving.
    pub fn render_batch(&self, encoded: ArrayView2<'_, f64>) -> Result<Array3<f64>> {
        let mut out = Array3::zeros((encoded.nrows(), self.grid_h, self.grid_w));
        for (i, row) in encoded.rows().into_iter().enumerate() {
            let img = self.render(row)?;
            out.index_axis_mut(ndarray::Axis(0), i).assign(&img);
        }
        Ok(out)
    }
}

fn fallback_assignment(n_features: usize, grid_h: usize, grid_w: usize) -> Vec<(usize, usize)> {
    (0..n_features)
        .map(|f| {
            let cell = f % (grid_h * grid_w);
            (cell / grid_w, cell % grid_w)
        })
        .collect()
}

fn max_pairwise_sq_dist(points: &Array2<f64>) -> f64 {
    let n = points.nrows();
    let mut max = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            max = f64::max(max, d);
        }
    }
    max
}

fn rotate_points(points: &[(f64, f64)], angle: f64) -> Vec<(f64, f64)> {
    let (s, c) = angle.sin_cos();
    points
        .iter()
        .map(|&(x, y)| (c * x - s * y, c * y + s * x))
        .collect()
}

/// Map rotated embedding coordinates onto grid cells; the bounding box is
/// divided evenly, with the maximal edge clamped into the last cell.
fn discretize(points: &[(f64, f64)], grid_h: usize, grid_w: usize) -> Vec<(usize, usize)> {
    let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
    for &(x, y) in points {
        min_x = min_x.min(x);
        max_x = max_x.max(x);
        min_y = min_y.min(y);
        max_y = max_y.max(y);
    }
    let span_x = max_x - min_x;
    let span_y = max_y - min_y;
    points
        .iter()
        .map(|&(x, y)| {
            let col = if span_x > 0.0 {
                (((x - min_x) / span_x) * grid_w as f64).floor() as usize
            } else {
                0
            };
            let row = if span_y > 0.0 {
                (((y - min_y) / span_y) * grid_h as f64).floor() as usize
            } else {
                0
            };
            (row.min(grid_h - 1), col.min(grid_w - 1))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// PCA projector (Gram-matrix trick: points x points, never rows x rows)
// ---------------------------------------------------------------------------

fn pca_2d(points: &Array2<f64>) -> Vec<(f64, f64)> {
    let n = points.nrows();
    let d = points.ncols();
    // center each coordinate over the points
    let mut centered = points.clone();
    for j in 0..d {
        let mean = centered.column(j).sum() / n as f64;
        centered.column_mut(j).mapv_inplace(|v| v - mean);
    }
    let gram = centered.dot(&centered.t());
    let (eigvals, eigvecs) = jacobi_eigen(&gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eigvals[b].total_cmp(&eigvals[a]).then(a.cmp(&b)));
    let mut coords = vec![(0.0, 0.0); n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eigvals[k].max(0.0);
        let scale = lambda.sqrt();
        let col = eigvecs.column(k);
        // canonical sign: largest-magnitude entry positive
        let mut lead = 0;
        for i in 0..n {
            if col[i].abs() > col[lead].abs() {
                lead = i;
            }
        }
        let sign = if col[lead] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            let v = sign * col[i] * scale;
            if axis == 0 {
                coords[i].0 = v;
            } else {
                coords[i].1 = v;
            }
        }
    }
    coords
}

/// Cyclic Jacobi eigendecomposition of a symmetric matrix.
/// Returns (eigenvalues, eigenvectors as columns).
fn jacobi_eigen(m: &Array2<f64>) -> (Vec<f64>, Array2<f64>) {
    let n = m.nrows();
    let mut a = m.clone();
    let mut v = Array2::eye(n);
    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a[[i, j]] * a[[i, j]];
            }
        }
        if off < 1e-22 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                if a[[p, q]].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[[q, q]] - a[[p, p]]) / (2.0 * a[[p, q]]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[[k, p]];
                    let akq = a[[k, q]];
                    a[[k, p]] = c * akp - s * akq;
                    a[[k, q]] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[[p, k]];
                    let aqk = a[[q, k]];
                    a[[p, k]] = c * apk - s * aqk;
                    a[[q, k]] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[[k, p]];
                    let vkq = v[[k, q]];
                    v[[k, p]] = c * vkp - s * vkq;
                    v[[k, q]] = s * vkp + c * vkq;
                }
            }
        }
    }
    let eigvals = (0..n).map(|i| a[[i, i]]).collect();
    (eigvals, v)
}

// ---------------------------------------------------------------------------
// Exact t-SNE projector
// ---------------------------------------------------------------------------

fn tsne_2d(points: &Array2<f64>, seed: u64) -> Vec<(f64, f64)> {
    let n = points.nrows();
    let perplexity = (30.0f64).min(((n - 1) as f64 / 3.0).max(1.0));
    let mut d2 = Array2::zeros((n, n));
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = points
                .row(i)
                .iter()
                .zip(points.row(j).iter())
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum();
            d2[[i, j]] = d;
            d2[[j, i]] = d;
        }
    }
    let p = joint_probabilities(&d2, perplexity);

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut y: Vec<(f64, f64)> = (0..n)
        .map(|_| {
            let a: f64 = rng.sample(rand_distr::StandardNormal);
            let b: f64 = rng.sample(rand_distr::StandardNormal);
            (a * 1e-2, b * 1e-2)
        })
        .collect();
    let mut vel = vec![(0.0, 0.0); n];
    let n_iter = 500;
    let lr = 100.0;
    for iter in 0..n_iter {
        let exaggeration = if iter < 250 { 12.0 } else { 1.0 };
        let momentum = if iter < 250 { 0.5 } else { 0.8 };

        // student-t affinities in the embedding
        let mut num = Array2::zeros((n, n));
        let mut z = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i].0 - y[j].0;
                let dy = y[i].1 - y[j].1;
                let w = 1.0 / (1.0 + dx * dx + dy * dy);
                num[[i, j]] = w;
                num[[j, i]] = w;
                z += 2.0 * w;
            }
        }
        let z = z.max(1e-12);

        for i in 0..n {
            let mut gx = 0.0;
            let mut gy = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let q = (num[[i, j]] / z).max(1e-12);
                let mult = (exaggeration * p[[i, j]] - q) * num[[i, j]];
                gx += mult * (y[i].0 - y[j].0);
                gy += mult * (y[i].1 - y[j].1);
            }
            gx *= 4.0;
            gy *= 4.0;
            vel[i].0 = momentum * vel[i].0 - lr * gx;
            vel[i].1 = momentum * vel[i].1 - lr * gy;
        }
        for i in 0..n {
            y[i].0 += vel[i].0;
            y[i].1 += vel[i].1;
        }
        // re-center to keep coordinates bounded
        let (mx, my) = y
            .iter()
            .fold((0.0, 0.0), |acc, &(a, b)| (acc.0 + a, acc.1 + b));
        let (mx, my) = (mx / n as f64, my / n as f64);
        for yi in y.iter_mut() {
            yi.0 -= mx;
            yi.1 -= my;
        }
    }
    y
}

/// Symmetrized high-dimensional affinities with per-point bandwidth chosen by
/// bisection to match the target perplexity.
fn joint_probabilities(d2: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = d2.nrows();
    let target_entropy = perplexity.ln();
    let mut cond = Array2::zeros((n, n));
    for i in 0..n {
        let mut beta = 1.0;
        let mut beta_min = f64::NEG_INFINITY;
        let mut beta_max = f64::INFINITY;
        for _ in 0..64 {
            let mut sum = 0.0;
            let mut weighted = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let w = (-beta * d2[[i, j]]).exp();
                sum += w;
                weighted += w * d2[[i, j]];
            }
            let sum = sum.max(1e-300);
            let entropy = beta * weighted / sum + sum.ln();
            let diff = entropy - target_entropy;
            if diff.abs() < 1e-7 {
                break;
            }
            if diff > 0.0 {
                beta_min = beta;
                beta = if beta_max.is_finite() {
                    (beta + beta_max) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                beta_max = beta;
                beta = if beta_min.is_finite() {
                    (beta + beta_min) / 2.0
                } else {
                    beta / 2.0
                };
            }
        }
        let mut sum = 0.0;
        for j in 0..n {
            if i != j {
                let w = (-beta * d2[[i, j]]).exp();
                cond[[i, j]] = w;
                sum += w;
            }
        }
        let sum = sum.max(1e-300);
        for j in 0..n {
            cond[[i, j]] /= sum;
        }
    }
    let mut p = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[[i, j]] = ((cond[[i, j]] + cond[[j, i]]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    p
}

// ---------------------------------------------------------------------------
// Minimum-area bounding rectangle (convex hull + rotating edges)
// ---------------------------------------------------------------------------

fn min_area_rect_angle(points: &[(f64, f64)]) -> f64 {
    let hull = convex_hull(points);
    if hull.len() < 2 {
        return 0.0;
    }
    if hull.len() == 2 {
        let (dx, dy) = (hull[1].0 - hull[0].0, hull[1].1 - hull[0].1);
        return dy.atan2(dx);
    }
    let mut best_angle = 0.0;
    let mut best_area = f64::INFINITY;
    for i in 0..hull.len() {
        let a = hull[i];
        let b = hull[(i + 1) % hull.len()];
        let angle = (b.1 - a.1).atan2(b.0 - a.0);
        let rotated = rotate_points(&hull, -angle);
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &rotated {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        let area = (max_x - min_x) * (max_y - min_y);
        if area < best_area {
            best_area = area;
            best_angle = angle;
        }
    }
    best_angle
}

/// Andrew monotone chain; returns hull vertices in counter-clockwise order.
fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut pts: Vec<(f64, f64)> = points.to_vec();
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    pts.dedup();
    let n = pts.len();
    if n <= 2 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * n);
    for &p in &pts {
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0 {
            hull.pop();
        }
        hull.push(p);
    }
    let lower_len = hull.len() + 1;
    for &p in pts.iter().rev().skip(1) {
        while hull.len() >= lower_len && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0.0
        {
            hull.pop();
        }
        hull.push(p);
    }
    hull.pop();
    if hull.len() < 3 {
        // collinear input collapses to its extremes
        let mut ends = vec![pts[0], pts[n - 1]];
        ends.dedup();
        return ends;
    }
    hull
}

// ---------------------------------------------------------------------------
// PGM (P5) export
// ---------------------------------------------------------------------------

/// Write a [0,1] image as binary 8-bit PGM.
pub fn write_pgm(path: &std::path::Path, img: &Array2<f64>) -> Result<()> {
    use std::io::Write;
    let (h, w) = img.dim();
    let mut buf = Vec::with_capacity(32 + h * w);
    buf.extend_from_slice(format!("P5\n{w} {h}\n255\n").as_bytes());
    for v in img.iter() {
        buf.push((v.clamp(0.0, 1.0) * 255.0).round() as u8);
    }
    let mut file = std::fs::File::create(path)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    file.write_all(&buf)
        .map_err(|e| Error::io(path.display().to_string(), e))?;
    Ok(())
}

/// Read back a binary PGM written by [`write_pgm`] (tests and inspection).
pub fn read_pgm(path: &std::path::Path) -> Result<Array2<f64>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let header_end = bytes
        .windows(1)
        .enumerate()
        .filter(|(_, w)| w[0] == b'\n')
        .map(|(i, _)| i)
        .nth(2)
        .ok_or_else(|| Error::invalid("malformed pgm header"))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| Error::invalid("malformed pgm header"))?;
    let mut lines = header.lines();
    if lines.next() != Some("P5") {
        return Err(Error::invalid("not a P5 pgm"));
    }
    let dims: Vec<usize> = lines
        .next()
        .unwrap_or("")
        .split_whitespace()
        .filter_map(|t| t.parse().ok())
        .collect();
    if dims.len() != 2 {
        return Err(Error::invalid("malformed pgm dimensions"));
    }
    let (w, h) = (dims[0], dims[1]);
    let data = &bytes[header_end + 1..];
    if data.len() != w * h {
        return Err(Error::invalid("pgm payload size mismatch"));
    }
    Ok(Array2::from_shape_fn((h, w), |(r, c)| {
        data[r * w + c] as f64 / 255.0
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn perfect_lattice_fills_two_by_two_grid() {
        // 4 features whose train columns form two orthogonal axes: feature
        // embeddings land on a square, one per cell.
        let pts = [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)];
        let assign = discretize(&pts, 2, 2);
        let mut cells: Vec<(usize, usize)> = assign.clone();
        cells.sort_unstable();
        cells.dedup();
        assert_eq!(cells.len(), 4);
    }

    #[test]
    fn every_feature_assigned_and_conserved() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let data = Array2::from_shape_fn((50, 100), |_| rng.gen_range(-1.0..1.0));
        let pm = fit_pixel_map(data.view(), (10, 10), 0, Projector::Pca).unwrap();
        assert_eq!(pm.assignment.len(), 100);
        assert!(pm.assignment.iter().all(|&(r, c)| r < 10 && c < 10));
    }

    #[test]
    fn pca_refit_is_bit_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        let data = Array2::from_shape_fn((40, 12), |_| rng.gen_range(-1.0..1.0));
        let a = fit_pixel_map(data.view(), (10, 10), 5, Projector::Pca).unwrap();
        let b = fit_pixel_map(data.view(), (10, 10), 5, Projector::Pca).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.embedding, b.embedding);
        assert_eq!(a.rotation, b.rotation);
    }

    #[test]
    fn tsne_refit_same_seed_is_bit_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let data = Array2::from_shape_fn((30, 10), |_| rng.gen_range(-1.0..1.0));
        let a = fit_pixel_map(data.view(), (10, 10), 5, Projector::Tsne).unwrap();
        let b = fit_pixel_map(data.view(), (10, 10), 5, Projector::Tsne).unwrap();
        assert_eq!(a.assignment, b.assignment);
        assert_eq!(a.embedding, b.embedding);
    }

    #[test]
    fn identical_features_fall_back_to_schema_order() {
        let data = Array2::from_elem((20, 7), 1.5);
        let pm = fit_pixel_map(data.view(), (3, 3), 0, Projector::Pca).unwrap();
        assert!(pm.fallback);
        assert_eq!(pm.assignment[0], (0, 0));
        assert_eq!(pm.assignment[1], (0, 1));
        assert_eq!(pm.assignment[4], (1, 1));
    }

    #[test]
    fn single_feature_is_rejected() {
        let data = Array2::zeros((5, 1));
        assert!(fit_pixel_map(data.view(), (2, 2), 0, Projector::Pca).is_err());
    }

    #[test]
    fn render_minima_row_is_black_and_mean_rule_holds() {
        let train = array![[0.0, 0.0], [1.0, 4.0], [0.5, 2.0]];
        let mut pm = fit_pixel_map(train.view(), (2, 2), 0, Projector::Pca).unwrap();
        // force both features into one cell to check the collision mean
        pm.assignment = vec![(0, 0), (0, 0)];
        let img = pm.render(array![0.0, 0.0].view()).unwrap();
        assert_eq!(img[[0, 0]], 0.0);
        // normalized values 0.2 and 0.8 average to 0.5
        let img = pm.render(array![0.2, 3.2].view()).unwrap();
        assert!((img[[0, 0]] - 0.5).abs() < 1e-12);
        // empty cells stay zero
        assert_eq!(img[[1, 1]], 0.0);
    }

    #[test]
    fn render_pixels_stay_in_unit_range_even_out_of_bounds() {
        let train = array![[0.0, 0.0], [1.0, 4.0]];
        let pm = fit_pixel_map(train.view(), (2, 2), 0, Projector::Pca).unwrap();
        let img = pm.render(array![100.0, -100.0].view()).unwrap();
        assert!(img.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn render_batch_equals_per_row_render() {
        let mut rng = ChaCha12Rng::seed_from_u64(8);
        let train = Array2::from_shape_fn((30, 6), |_| rng.gen_range(-2.0..2.0));
        let pm = fit_pixel_map(train.view(), (4, 4), 1, Projector::Pca).unwrap();
        let batch = Array2::from_shape_fn((64, 6), |_| rng.gen_range(-2.0..2.0));
        let imgs = pm.render_batch(batch.view()).unwrap();
        for i in 0..64 {
            let single = pm.render(batch.row(i)).unwrap();
            assert_eq!(imgs.index_axis(ndarray::Axis(0), i), single.view());
        }
        let empty = pm.render_batch(Array2::zeros((0, 6)).view()).unwrap();
        assert_eq!(empty.dim(), (0, 4, 4));
    }

    #[test]
    fn render_recompute_is_byte_identical() {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let train = Array2::from_shape_fn((25, 9), |_| rng.gen_range(-1.0..3.0));
        let pm = fit_pixel_map(train.view(), (3, 3), 2, Projector::Pca).unwrap();
        let a = pm.render(train.row(7)).unwrap();
        let b = pm.render(train.row(7)).unwrap();
        let bytes_a: Vec<u64> = a.iter().map(|v| v.to_bits()).collect();
        let bytes_b: Vec<u64> = b.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bytes_a, bytes_b);
    }

    #[test]
    fn pgm_round_trip() {
        let img = array![[0.0, 0.5], [1.0, 0.25]];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        write_pgm(&path, &img).unwrap();
        let back = read_pgm(&path).unwrap();
        for (a, b) in img.iter().zip(back.iter()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn min_area_rect_aligns_rotated_square() {
        // A unit square rotated 30 degrees should come back axis-aligned.
        let base = [(0.0, 0.0), (1.0, 0.0), (1.0, 1.0), (0.0, 1.0)];
        let rotated = rotate_points(&base, 30f64.to_radians());
        let angle = min_area_rect_angle(&rotated);
        let restored = rotate_points(&rotated, -angle);
        let (mut min_x, mut max_x) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut min_y, mut max_y) = (f64::INFINITY, f64::NEG_INFINITY);
        for &(x, y) in &restored {
            min_x = min_x.min(x);
            max_x = max_x.max(x);
            min_y = min_y.min(y);
            max_y = max_y.max(y);
        }
        let area = (max_x - min_x) * (max_y - min_y);
        assert!((area - 1.0).abs() < 1e-9, "area {area}");
    }
}
