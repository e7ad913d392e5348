//! Zero fill-in incomplete LU factorisation, used to precondition BiCGSTAB.

/// `L` (unit lower, implicit diagonal) and `U` stored together in CSR with
/// sorted columns.
#[derive(Debug, Clone)]
pub struct Ilu0 {
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    diag_pos: Vec<usize>,
}

impl Ilu0 {
    /// Factorises a matrix given as rows of `(column, value)`. Every row must
    /// carry its diagonal entry. Pivots that vanish are replaced by the
    /// original diagonal so the preconditioner stays defined.
    pub fn new(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag_pos = Vec::with_capacity(n);
        row_ptr.push(0);
        for (i, mut row) in rows.into_iter().enumerate() {
            row.sort_unstable_by_key(|e| e.0);
            let start = cols.len();
            for (c, v) in row {
                if cols.len() > start && *cols.last().unwrap() == c {
                    *vals.last_mut().unwrap() += v;
                } else {
                    cols.push(c);
                    vals.push(v);
                }
            }
            let d = start + cols[start..].binary_search(&i).expect("diagonal entry present");
            diag_pos.push(d);
            row_ptr.push(cols.len());
        }
        let original: Vec<f64> = diag_pos.iter().map(|&d| vals[d]).collect();

        let mut slot = vec![usize::MAX; n];
        for i in 0..n {
            let (start, end) = (row_ptr[i], row_ptr[i + 1]);
            for p in start..end {
                slot[cols[p]] = p;
            }
            for p in start..diag_pos[i] {
                let k = cols[p];
                let factor = vals[p] / vals[diag_pos[k]];
                vals[p] = factor;
                for q in diag_pos[k] + 1..row_ptr[k + 1] {
                    let s = slot[cols[q]];
                    if s != usize::MAX {
                        vals[s] -= factor * vals[q];
                    }
                }
            }
            let d = diag_pos[i];
            if vals[d].abs() <= 1e-14 * original[i].abs() || !vals[d].is_finite() {
                vals[d] = if original[i] != 0.0 { original[i] } else { 1.0 };
            }
            for p in start..end {
                slot[cols[p]] = usize::MAX;
            }
        }
        Ilu0 { row_ptr, cols, vals, diag_pos }
    }

    /// `y = (LU)⁻¹ x`.
    pub fn apply(&self, x: &[f64], y: &mut [f64]) {
        let n = x.len();
        for i in 0..n {
            let mut acc = x[i];
            for p in self.row_ptr[i]..self.diag_pos[i] {
                acc -= self.vals[p] * y[self.cols[p]];
            }
            y[i] = acc;
        }
        for i in (0..n).rev() {
            let mut acc = y[i];
            for p in self.diag_pos[i] + 1..self.row_ptr[i + 1] {
                acc -= self.vals[p] * y[self.cols[p]];
            }
            y[i] = acc / self.vals[self.diag_pos[i]];
        }
    }
}
