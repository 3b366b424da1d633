//! Sparse LU factorisation of simplex bases.
//!
//! Right-looking Markowitz elimination with threshold pivoting. Column and row
//! singletons are taken first, which covers most of a slack-heavy basis before
//! any fill-in can occur.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

const NONE: usize = usize::MAX;

/// Relative threshold for accepting a pivot against its column maximum.
const PIVOT_THRESHOLD: f64 = 0.1;
/// Pivots below this magnitude are treated as structural zeros.
const PIVOT_ABS_MIN: f64 = 1e-9;
/// Columns examined per Markowitz search.
const SEARCH_COLS: usize = 4;

/// Compressed sparse columns of a square matrix.
pub(crate) struct SparseCols<'a> {
    pub start: &'a [usize],
    pub index: &'a [usize],
    pub value: &'a [f64],
}

/// Basis positions and rows that could not be pivoted.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct Singular {
    pub cols: Vec<usize>,
    pub rows: Vec<usize>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LuFactors {
    m: usize,
    prow: Vec<usize>,
    pcol: Vec<usize>,
    l_start: Vec<usize>,
    l_index: Vec<usize>,
    l_value: Vec<f64>,
    u_diag: Vec<f64>,
    u_start: Vec<usize>,
    u_index: Vec<usize>,
    u_value: Vec<f64>,
    // U by columns and L by rows, indexed by pivot step, so that both solves
    // can skip zero entries.
    ut_start: Vec<usize>,
    ut_index: Vec<usize>,
    ut_value: Vec<f64>,
    lt_start: Vec<usize>,
    lt_index: Vec<usize>,
    lt_value: Vec<f64>,
    work: Vec<f64>,
}

impl LuFactors {
    pub fn nonzeros(&self) -> usize {
        self.l_index.len() + self.u_index.len() + self.m
    }

    /// Factorises the `m x m` matrix given by columns.
    pub fn factorize(m: usize, a: &SparseCols<'_>) -> Result<LuFactors, Singular> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); m];
        let mut colpat: Vec<Vec<usize>> = vec![Vec::new(); m];
        for c in 0..m {
            for k in a.start[c]..a.start[c + 1] {
                let r = a.index[k];
                let v = a.value[k];
                if v != 0.0 {
                    rows[r].push((c, v));
                    colpat[c].push(r);
                }
            }
        }
        let mut row_done = vec![false; m];
        let mut col_done = vec![false; m];
        let mut col_heap: BinaryHeap<Reverse<(usize, usize)>> =
            (0..m).map(|c| Reverse((colpat[c].len(), c))).collect();
        let mut row_heap: BinaryHeap<Reverse<(usize, usize)>> = (0..m)
            .filter(|&r| rows[r].len() == 1)
            .map(|r| Reverse((1, r)))
            .collect();

        let mut f = LuFactors {
            m,
            prow: Vec::with_capacity(m),
            pcol: Vec::with_capacity(m),
            l_start: vec![0],
            u_start: vec![0],
            work: vec![0.0; m],
            ..Default::default()
        };
        let mut pos = vec![NONE; m];
        let mut deficient_cols = Vec::new();
        let mut pivot_row_buf: Vec<(usize, f64)> = Vec::new();

        let mut remaining = m;
        while remaining > 0 {
            let pick = choose_pivot(
                &rows,
                &colpat,
                &row_done,
                &col_done,
                &mut col_heap,
                &mut row_heap,
            );
            let (p, q) = match pick {
                Pick::Pivot(p, q) => (p, q),
                Pick::Deficient(c) => {
                    col_done[c] = true;
                    for &r in &colpat[c] {
                        if let Some(k) = rows[r].iter().position(|&(j, _)| j == c) {
                            rows[r].swap_remove(k);
                            row_heap.push(Reverse((rows[r].len(), r)));
                        }
                    }
                    colpat[c].clear();
                    deficient_cols.push(c);
                    remaining -= 1;
                    continue;
                }
                Pick::Exhausted => break,
            };

            // Pivot row becomes the U row; drop it from every column pattern.
            pivot_row_buf.clear();
            let mut diag = 0.0;
            for &(j, v) in &rows[p] {
                if j == q {
                    diag = v;
                } else {
                    pivot_row_buf.push((j, v));
                }
            }
            rows[p].clear();
            row_done[p] = true;
            for &(j, _) in &pivot_row_buf {
                if let Some(k) = colpat[j].iter().position(|&r| r == p) {
                    colpat[j].swap_remove(k);
                }
            }

            // Eliminate column q from the other active rows.
            let targets: Vec<usize> = colpat[q].iter().copied().filter(|&r| r != p).collect();
            for &i in &targets {
                let k = rows[i]
                    .iter()
                    .position(|&(j, _)| j == q)
                    .expect("column pattern out of sync with rows");
                let a_iq = rows[i].swap_remove(k).1;
                let l = a_iq / diag;
                f.l_index.push(i);
                f.l_value.push(l);
                if !pivot_row_buf.is_empty() {
                    for (idx, &(j, _)) in rows[i].iter().enumerate() {
                        pos[j] = idx;
                    }
                    for &(j, a_pj) in &pivot_row_buf {
                        let at = pos[j];
                        if at != NONE {
                            rows[i][at].1 -= l * a_pj;
                        } else {
                            rows[i].push((j, -l * a_pj));
                            colpat[j].push(i);
                        }
                    }
                    for &(j, _) in rows[i].iter() {
                        pos[j] = NONE;
                    }
                }
                if rows[i].len() <= 1 {
                    row_heap.push(Reverse((rows[i].len(), i)));
                }
            }
            colpat[q].clear();
            col_done[q] = true;
            for &(j, _) in &pivot_row_buf {
                col_heap.push(Reverse((colpat[j].len(), j)));
            }

            f.l_start.push(f.l_index.len());
            f.prow.push(p);
            f.pcol.push(q);
            f.u_diag.push(diag);
            for &(j, v) in &pivot_row_buf {
                f.u_index.push(j);
                f.u_value.push(v);
            }
            f.u_start.push(f.u_index.len());
            remaining -= 1;
        }

        if !deficient_cols.is_empty() || f.prow.len() < m {
            let mut cols = deficient_cols;
            cols.extend((0..m).filter(|&c| !col_done[c]));
            let rows = (0..m).filter(|&r| !row_done[r]).collect();
            return Err(Singular { cols, rows });
        }
        f.transpose();
        Ok(f)
    }

    fn transpose(&mut self) {
        let m = self.m;
        let mut step_of_col = vec![0; m];
        let mut step_of_row = vec![0; m];
        for k in 0..m {
            step_of_col[self.pcol[k]] = k;
            step_of_row[self.prow[k]] = k;
        }
        let u: Vec<(usize, usize, f64)> = (0..m)
            .flat_map(|k| {
                (self.u_start[k]..self.u_start[k + 1])
                    .map(move |t| (k, t))
            })
            .map(|(k, t)| (step_of_col[self.u_index[t]], self.prow[k], self.u_value[t]))
            .collect();
        (self.ut_start, self.ut_index, self.ut_value) = bucket(m, &u);
        let l: Vec<(usize, usize, f64)> = (0..m)
            .flat_map(|k| (self.l_start[k]..self.l_start[k + 1]).map(move |t| (k, t)))
            .map(|(k, t)| (step_of_row[self.l_index[t]], self.prow[k], self.l_value[t]))
            .collect();
        (self.lt_start, self.lt_index, self.lt_value) = bucket(m, &l);
    }

    /// Solves `B x = b` in place: on entry `b` is indexed by row, on exit by
    /// basis position.
    pub fn ftran(&mut self, b: &mut Vec<f64>) {
        for k in 0..self.m {
            let xp = b[self.prow[k]];
            if xp != 0.0 {
                for t in self.l_start[k]..self.l_start[k + 1] {
                    b[self.l_index[t]] -= self.l_value[t] * xp;
                }
            }
        }
        let out = &mut self.work;
        for k in (0..self.m).rev() {
            let x = b[self.prow[k]] / self.u_diag[k];
            out[self.pcol[k]] = x;
            if x != 0.0 {
                for t in self.ut_start[k]..self.ut_start[k + 1] {
                    b[self.ut_index[t]] -= self.ut_value[t] * x;
                }
            }
        }
        std::mem::swap(b, out);
    }

    /// Solves `B^T y = c` in place: on entry `c` is indexed by basis
    /// position, on exit by row.
    pub fn btran(&mut self, c: &mut Vec<f64>) {
        let w = &mut self.work;
        for k in 0..self.m {
            let v = c[self.pcol[k]] / self.u_diag[k];
            w[self.prow[k]] = v;
            if v != 0.0 {
                for t in self.u_start[k]..self.u_start[k + 1] {
                    c[self.u_index[t]] -= self.u_value[t] * v;
                }
            }
        }
        for k in (0..self.m).rev() {
            let v = w[self.prow[k]];
            if v != 0.0 {
                for t in self.lt_start[k]..self.lt_start[k + 1] {
                    w[self.lt_index[t]] -= self.lt_value[t] * v;
                }
            }
        }
        std::mem::swap(c, w);
    }
}

/// Groups `(bucket, index, value)` triples into compressed storage.
fn bucket(m: usize, entries: &[(usize, usize, f64)]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
    let mut start = vec![0; m + 1];
    for &(b, _, _) in entries {
        start[b + 1] += 1;
    }
    for k in 0..m {
        start[k + 1] += start[k];
    }
    let mut next = start.clone();
    let mut index = vec![0; entries.len()];
    let mut value = vec![0.0; entries.len()];
    for &(b, i, v) in entries {
        index[next[b]] = i;
        value[next[b]] = v;
        next[b] += 1;
    }
    (start, index, value)
}

enum Pick {
    Pivot(usize, usize),
    Deficient(usize),
    Exhausted,
}

fn entry(rows: &[Vec<(usize, f64)>], r: usize, c: usize) -> f64 {
    rows[r]
        .iter()
        .find(|&&(j, _)| j == c)
        .map(|&(_, v)| v)
        .unwrap_or(0.0)
}

fn pop_valid(
    heap: &mut BinaryHeap<Reverse<(usize, usize)>>,
    done: &[bool],
    count: impl Fn(usize) -> usize,
) -> Option<(usize, usize)> {
    while let Some(Reverse((cnt, idx))) = heap.pop() {
        if !done[idx] && count(idx) == cnt {
            return Some((cnt, idx));
        }
    }
    None
}

fn choose_pivot(
    rows: &[Vec<(usize, f64)>],
    colpat: &[Vec<usize>],
    row_done: &[bool],
    col_done: &[bool],
    col_heap: &mut BinaryHeap<Reverse<(usize, usize)>>,
    row_heap: &mut BinaryHeap<Reverse<(usize, usize)>>,
) -> Pick {
    let Some((cnt, c)) = pop_valid(col_heap, col_done, |c| colpat[c].len()) else {
        return Pick::Exhausted;
    };
    if cnt == 0 {
        return Pick::Deficient(c);
    }
    if cnt == 1 {
        let r = colpat[c][0];
        if entry(rows, r, c).abs() >= PIVOT_ABS_MIN {
            return Pick::Pivot(r, c);
        }
    }
    col_heap.push(Reverse((cnt, c)));

    // Row singletons cause no fill-in.
    while let Some((rc, r)) = pop_valid(row_heap, row_done, |r| rows[r].len()) {
        if rc == 1 {
            let (c, v) = rows[r][0];
            if v.abs() >= PIVOT_ABS_MIN && v.abs() >= PIVOT_THRESHOLD * col_max(rows, colpat, c)
            {
                return Pick::Pivot(r, c);
            }
        }
    }

    let mut candidates = Vec::with_capacity(SEARCH_COLS);
    while candidates.len() < SEARCH_COLS {
        match pop_valid(col_heap, col_done, |c| colpat[c].len()) {
            Some(e) => candidates.push(e),
            None => break,
        }
    }
    let mut best: Option<(usize, f64, usize, usize)> = None;
    for &(cnt, c) in &candidates {
        let cmax = col_max(rows, colpat, c);
        for &r in &colpat[c] {
            let v = entry(rows, r, c).abs();
            if v < PIVOT_ABS_MIN || v < PIVOT_THRESHOLD * cmax {
                continue;
            }
            let cost = (rows[r].len() - 1) * (cnt - 1);
            let better = match best {
                None => true,
                Some((bc, bv, _, _)) => cost < bc || (cost == bc && v > bv),
            };
            if better {
                best = Some((cost, v, r, c));
            }
        }
    }
    for &(cnt, c) in &candidates {
        col_heap.push(Reverse((cnt, c)));
    }
    match best {
        Some((_, _, r, c)) => Pick::Pivot(r, c),
        None => {
            // Every candidate column is numerically empty.
            let (_, c) = candidates[0];
            Pick::Deficient(c)
        }
    }
}

fn col_max(rows: &[Vec<(usize, f64)>], colpat: &[Vec<usize>], c: usize) -> f64 {
    colpat[c]
        .iter()
        .map(|&r| entry(rows, r, c).abs())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dense_to_csc(a: &[Vec<f64>]) -> (Vec<usize>, Vec<usize>, Vec<f64>) {
        let m = a.len();
        let mut start = vec![0];
        let mut index = Vec::new();
        let mut value = Vec::new();
        for c in 0..m {
            for (r, row) in a.iter().enumerate() {
                if row[c] != 0.0 {
                    index.push(r);
                    value.push(row[c]);
                }
            }
            start.push(index.len());
        }
        (start, index, value)
    }

    fn matvec(a: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
        a.iter()
            .map(|row| row.iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn random_sparse(rng: &mut ChaCha8Rng, m: usize) -> Vec<Vec<f64>> {
        let mut a = vec![vec![0.0; m]; m];
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = rng.random_range(1.0..3.0);
            for _ in 0..2 {
                let j = rng.random_range(0..m);
                row[j] += rng.random_range(-1.0..1.0);
            }
        }
        a
    }

    #[test]
    fn solves_random_sparse_systems() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in [1, 2, 5, 30, 120] {
            let a = random_sparse(&mut rng, m);
            let (s, i, v) = dense_to_csc(&a);
            let mut lu = LuFactors::factorize(
                m,
                &SparseCols {
                    start: &s,
                    index: &i,
                    value: &v,
                },
            )
            .unwrap();
            let x: Vec<f64> = (0..m).map(|k| k as f64 - 3.0).collect();
            let mut b = matvec(&a, &x);
            lu.ftran(&mut b);
            for k in 0..m {
                assert!((b[k] - x[k]).abs() < 1e-9, "ftran m={m}");
            }
            // B^T y = c
            let at: Vec<Vec<f64>> = (0..m).map(|r| (0..m).map(|c| a[c][r]).collect()).collect();
            let mut c = matvec(&at, &x);
            lu.btran(&mut c);
            for k in 0..m {
                assert!((c[k] - x[k]).abs() < 1e-9, "btran m={m}");
            }
        }
    }

    #[test]
    fn detects_singular_columns() {
        let a = vec![
            vec![1.0, 2.0, 0.0],
            vec![2.0, 4.0, 0.0],
            vec![0.0, 0.0, 1.0],
        ];
        let (s, i, v) = dense_to_csc(&a);
        let err = LuFactors::factorize(
            3,
            &SparseCols {
                start: &s,
                index: &i,
                value: &v,
            },
        )
        .unwrap_err();
        assert_eq!(err.cols.len(), 1);
        assert_eq!(err.rows.len(), 1);
    }

    #[test]
    fn permutation_matrix() {
        let a = vec![
            vec![0.0, 0.0, -1.0],
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
        ];
        let (s, i, v) = dense_to_csc(&a);
        let mut lu = LuFactors::factorize(
            3,
            &SparseCols {
                start: &s,
                index: &i,
                value: &v,
            },
        )
        .unwrap();
        let mut b = vec![-3.0, 1.0, 4.0];
        lu.ftran(&mut b);
        assert_eq!(b, vec![1.0, 2.0, 3.0]);
    }
}
