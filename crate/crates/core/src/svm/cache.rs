//! Kernel matrix columns with a bounded least-recently-used cache.

use std::collections::BTreeMap;
use std::rc::Rc;

use ndarray::ArrayView2;

use super::kernel::Kernel;

pub const DEFAULT_CACHE_BYTES: usize = 256 << 20;

pub(crate) struct KernelCache {
    rows: Vec<f64>,
    dim: usize,
    n: usize,
    kernel: Kernel,
    diag: Vec<f64>,
    columns: Vec<Option<Rc<[f64]>>>,
    stamps: Vec<u64>,
    lru: BTreeMap<u64, usize>,
    tick: u64,
    capacity: usize,
}

impl KernelCache {
    pub fn new(x: ArrayView2<'_, f64>, kernel: Kernel, budget_bytes: usize) -> Self {
        let (n, dim) = x.dim();
        let rows: Vec<f64> = x.iter().copied().collect();
        let diag = (0..n)
            .map(|i| {
                let r = &rows[i * dim..(i + 1) * dim];
                kernel.eval(r, r)
            })
            .collect();
        let per_column = (n * std::mem::size_of::<f64>()).max(1);
        KernelCache {
            rows,
            dim,
            n,
            kernel,
            diag,
            columns: vec![None; n],
            stamps: vec![0; n],
            lru: BTreeMap::new(),
            tick: 0,
            capacity: (budget_bytes / per_column).clamp(2, n.max(2)),
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.dim..(i + 1) * self.dim]
    }

    pub fn diag(&self, i: usize) -> f64 {
        self.diag[i]
    }

    /// Column `i` of the kernel matrix.
    pub fn column(&mut self, i: usize) -> Rc<[f64]> {
        self.tick += 1;
        if let Some(col) = &self.columns[i] {
            let col = Rc::clone(col);
            self.lru.remove(&self.stamps[i]);
            self.stamps[i] = self.tick;
            self.lru.insert(self.tick, i);
            return col;
        }
        if self.lru.len() >= self.capacity {
            if let Some((_, victim)) = self.lru.pop_first() {
                self.columns[victim] = None;
            }
        }
        let xi = self.row(i);
        let col: Rc<[f64]> = (0..self.n).map(|t| self.kernel.eval(xi, self.row(t))).collect();
        self.columns[i] = Some(Rc::clone(&col));
        self.stamps[i] = self.tick;
        self.lru.insert(self.tick, i);
        col
    }

    #[cfg(test)]
    fn cached(&self) -> usize {
        self.lru.len()
    }
}
