//! Level sets of a sampled field: marching squares for drawing and per-row
//! crossings for measuring where a boundary lies.

use std::collections::HashMap;

use crate::sweep::SweepGrid;

/// Scalar field on a tensor grid, row-major with y as the slow index.
/// Non-finite samples mark holes.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGrid {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub values: Vec<f64>,
}

impl FieldGrid {
    pub fn new(xs: Vec<f64>, ys: Vec<f64>, values: Vec<f64>) -> Self {
        assert_eq!(xs.len() * ys.len(), values.len(), "field does not fill its grid");
        FieldGrid { xs, ys, values }
    }

    /// Samples `f(x, y)` at every node.
    pub fn sample<F: Fn(f64, f64) -> f64>(xs: Vec<f64>, ys: Vec<f64>, f: F) -> Self {
        let values = ys.iter().flat_map(|&y| xs.iter().map(|&x| f(x, y)).collect::<Vec<_>>()).collect();
        FieldGrid { xs, ys, values }
    }

    /// One measure of a sweep, NaN where the cell failed.
    pub fn from_sweep<F: Fn(&elphot::measures::MeasureResult) -> f64>(grid: &SweepGrid, f: F) -> Self {
        let values = grid.cells.iter().map(|c| c.outcome.result().map_or(f64::NAN, &f)).collect();
        FieldGrid { xs: grid.dq_perp.clone(), ys: grid.dk_ph.clone(), values }
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.xs.len() + i]
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        FieldGrid { xs: self.xs.clone(), ys: self.ys.clone(), values: self.values.iter().map(|&v| f(v)).collect() }
    }
}

/// Grid edge a contour vertex sits on: the lower-left node and the direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Edge {
    H(usize, usize),
    V(usize, usize),
}

/// A contour polyline in fractional index coordinates: (i, j) = (2.5, 1)
/// lies halfway between nodes (2, 1) and (3, 1).
pub type Polyline = Vec<(f64, f64)>;

/// Contour segments of `level`, joined into polylines. Cells touching a
/// non-finite sample are skipped. Saddles are split by the cell mean.
pub fn marching_squares(field: &FieldGrid, level: f64) -> Vec<Polyline> {
    let (nx, ny) = (field.xs.len(), field.ys.len());
    if nx < 2 || ny < 2 {
        return Vec::new();
    }
    let vertex = |e: Edge| -> (f64, f64) {
        let (a, b, p0, dir) = match e {
            Edge::H(i, j) => (field.at(i, j), field.at(i + 1, j), (i as f64, j as f64), (1.0, 0.0)),
            Edge::V(i, j) => (field.at(i, j), field.at(i, j + 1), (i as f64, j as f64), (0.0, 1.0)),
        };
        let t = ((level - a) / (b - a)).clamp(0.0, 1.0);
        (p0.0 + t * dir.0, p0.1 + t * dir.1)
    };

    let mut segments: Vec<(Edge, Edge)> = Vec::new();
    for j in 0..ny - 1 {
        for i in 0..nx - 1 {
            let v = [field.at(i, j), field.at(i + 1, j), field.at(i + 1, j + 1), field.at(i, j + 1)];
            if v.iter().any(|x| !x.is_finite()) {
                continue;
            }
            let above = v.map(|x| x >= level);
            let case = above.iter().enumerate().fold(0, |acc, (k, &a)| acc | (usize::from(a) << k));
            let (bottom, right, top, left) = (Edge::H(i, j), Edge::V(i + 1, j), Edge::H(i, j + 1), Edge::V(i, j));
            let mut push = |a, b| segments.push((a, b));
            match case {
                0 | 15 => {}
                1 | 14 => push(left, bottom),
                2 | 13 => push(bottom, right),
                3 | 12 => push(left, right),
                4 | 11 => push(right, top),
                6 | 9 => push(bottom, top),
                7 | 8 => push(left, top),
                5 | 10 => {
                    let center_above = v.iter().sum::<f64>() / 4.0 >= level;
                    // Corners 0 and 2 are connected through the center when it
                    // shares their side.
                    if (case == 5) == center_above {
                        push(left, top);
                        push(bottom, right);
                    } else {
                        push(left, bottom);
                        push(right, top);
                    }
                }
                _ => unreachable!(),
            }
        }
    }
    join(&segments).into_iter().map(|chain| chain.into_iter().map(vertex).collect()).collect()
}

/// Chains segments that share an edge vertex.
fn join(segments: &[(Edge, Edge)]) -> Vec<Vec<Edge>> {
    let mut by_edge: HashMap<Edge, Vec<usize>> = HashMap::new();
    for (k, &(a, b)) in segments.iter().enumerate() {
        by_edge.entry(a).or_default().push(k);
        by_edge.entry(b).or_default().push(k);
    }
    let mut used = vec![false; segments.len()];
    let mut chains = Vec::new();
    // Open chains first, starting from edges with a single segment, so that
    // every chain is walked from one end.
    let mut starts: Vec<usize> = (0..segments.len()).collect();
    starts.sort_by_key(|&k| {
        let (a, b) = segments[k];
        std::cmp::Reverse(usize::from(by_edge[&a].len() == 1) + usize::from(by_edge[&b].len() == 1))
    });
    for start in starts {
        if used[start] {
            continue;
        }
        used[start] = true;
        let (a, b) = segments[start];
        let (first, mut tail) = if by_edge[&b].len() == 1 { (b, a) } else { (a, b) };
        let mut chain = vec![first, tail];
        while let Some(&next) = by_edge[&tail].iter().find(|&&k| !used[k]) {
            used[next] = true;
            let (a, b) = segments[next];
            tail = if a == tail { b } else { a };
            chain.push(tail);
        }
        chains.push(chain);
    }
    chains
}

/// For each row, the x positions where the field crosses `level` between
/// neighbouring samples. With `log_x` the position is interpolated in ln x.
pub fn row_crossings(field: &FieldGrid, level: f64, log_x: bool) -> Vec<Vec<f64>> {
    let nx = field.xs.len();
    (0..field.ys.len())
        .map(|j| {
            let mut out = Vec::new();
            for i in 0..nx.saturating_sub(1) {
                let (a, b) = (field.at(i, j) - level, field.at(i + 1, j) - level);
                if !(a.is_finite() && b.is_finite()) || (a < 0.0) == (b < 0.0) {
                    continue;
                }
                let t = a / (a - b);
                let (x0, x1) = (field.xs[i], field.xs[i + 1]);
                out.push(if log_x { (x0.ln() + t * (x1.ln() - x0.ln())).exp() } else { x0 + t * (x1 - x0) });
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn axis(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn constant_field_has_no_contour() {
        let f = FieldGrid::sample(axis(5), axis(4), |_, _| 2.0);
        assert!(marching_squares(&f, 1.0).is_empty());
        assert!(row_crossings(&f, 1.0, false).iter().all(Vec::is_empty));
    }

    #[test]
    fn circle_closes() {
        let f = FieldGrid::sample(axis(21), axis(21), |x, y| (x - 10.0).powi(2) + (y - 10.0).powi(2));
        let lines = marching_squares(&f, 36.0);
        assert_eq!(lines.len(), 1);
        let l = &lines[0];
        assert_eq!(l.first(), l.last(), "closed loop");
        for &(x, y) in l {
            let r = ((x - 10.0).powi(2) + (y - 10.0).powi(2)).sqrt();
            assert!((r - 6.0).abs() < 0.1, "{r}");
        }
    }

    #[test]
    fn straight_line_is_one_open_chain() {
        let f = FieldGrid::sample(axis(6), axis(5), |x, _| x);
        let lines = marching_squares(&f, 2.5);
        assert_eq!(lines.len(), 1);
        assert_eq!(lines[0].len(), 5);
        assert!(lines[0].iter().all(|&(x, _)| (x - 2.5).abs() < 1e-12));
    }

    #[test]
    fn saddle_gives_two_segments() {
        let f = FieldGrid::new(axis(2), axis(2), vec![1.0, 0.0, 0.0, 1.0]);
        assert_eq!(marching_squares(&f, 0.5).len(), 2);
    }

    #[test]
    fn holes_are_skipped() {
        let mut f = FieldGrid::sample(axis(3), axis(2), |x, _| x);
        f.values[1] = f64::NAN;
        assert!(marching_squares(&f, 0.5).is_empty());
    }

    #[test]
    fn log_crossing_is_geometric() {
        let f = FieldGrid::sample(vec![1.0, 100.0], vec![0.0], |x, _| x.log10());
        let c = row_crossings(&f, 1.0, true);
        assert!((c[0][0] - 10.0).abs() < 1e-12);
    }

    #[test]
    fn single_row_grid_is_fine() {
        let f = FieldGrid::sample(axis(5), vec![1.0], |x, _| x);
        assert!(marching_squares(&f, 1.5).is_empty());
        assert_eq!(row_crossings(&f, 1.5, false), vec![vec![1.5]]);
    }
}
