//! Range-minimum index: sparse table over block minima plus in-block prefix/suffix minima.

const BLOCK: usize = 32;

#[derive(Clone, Debug)]
pub struct BlockSparseTable {
    prefix: Vec<f64>,
    suffix: Vec<f64>,
    table: Vec<Vec<f64>>,
}

impl BlockSparseTable {
    pub fn new(v: &[f64]) -> Self {
        let n = v.len();
        let nb = n.div_ceil(BLOCK);
        let mut prefix = vec![0.0; n];
        let mut suffix = vec![0.0; n];
        let mut blocks = Vec::with_capacity(nb);
        for b in 0..nb {
            let (lo, hi) = (b * BLOCK, ((b + 1) * BLOCK).min(n));
            let mut m = f64::INFINITY;
            for i in lo..hi {
                m = m.min(v[i]);
                prefix[i] = m;
            }
            blocks.push(m);
            let mut m = f64::INFINITY;
            for i in (lo..hi).rev() {
                m = m.min(v[i]);
                suffix[i] = m;
            }
        }
        let mut table = vec![blocks];
        let mut k = 1;
        while (1 << k) <= nb {
            let prev = &table[k - 1];
            let half = 1 << (k - 1);
            let row: Vec<f64> = (0..=nb - (1 << k))
                .map(|i| prev[i].min(prev[i + half]))
                .collect();
            table.push(row);
            k += 1;
        }
        Self {
            prefix,
            suffix,
            table,
        }
    }

    fn blocks_min(&self, lo: usize, hi: usize) -> f64 {
        let len = hi - lo + 1;
        let k = usize::BITS as usize - 1 - len.leading_zeros() as usize;
        self.table[k][lo].min(self.table[k][hi + 1 - (1 << k)])
    }

    /// Minimum of `v[l..=r]`; `v` must be the slice the table was built from.
    pub fn query(&self, v: &[f64], l: usize, r: usize) -> f64 {
        let (l, r) = if l <= r { (l, r) } else { (r, l) };
        let (bl, br) = (l / BLOCK, r / BLOCK);
        if bl == br {
            return v[l..=r].iter().cloned().fold(f64::INFINITY, f64::min);
        }
        let mut m = self.suffix[l].min(self.prefix[r]);
        if br > bl + 1 {
            m = m.min(self.blocks_min(bl + 1, br - 1));
        }
        m
    }
}
