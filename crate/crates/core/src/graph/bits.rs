//! Square 0/1 matrices stored as packed rows.

/// `n × n` bit matrix, row-major, bit `j` of row `i` at word `j / 64`,
/// position `j % 64`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) struct BitMatrix {
    n: usize,
    words: usize,
    bits: Vec<u64>,
}

impl BitMatrix {
    pub(crate) fn zeros(n: usize) -> Self {
        let words = n.div_ceil(64);
        BitMatrix {
            n,
            words,
            bits: vec![0; n * words],
        }
    }

    pub(crate) fn n(&self) -> usize {
        self.n
    }

    pub(crate) fn words_per_row(&self) -> usize {
        self.words
    }

    pub(crate) fn row(&self, i: usize) -> &[u64] {
        &self.bits[i * self.words..(i + 1) * self.words]
    }

    pub(crate) fn row_mut(&mut self, i: usize) -> &mut [u64] {
        &mut self.bits[i * self.words..(i + 1) * self.words]
    }

    pub(crate) fn get(&self, i: usize, j: usize) -> bool {
        (self.bits[i * self.words + j / 64] >> (j % 64)) & 1 == 1
    }

    pub(crate) fn set(&mut self, i: usize, j: usize, value: bool) {
        let w = &mut self.bits[i * self.words + j / 64];
        let mask = 1u64 << (j % 64);
        if value {
            *w |= mask;
        } else {
            *w &= !mask;
        }
    }

    pub(crate) fn row_sum(&self, i: usize) -> u32 {
        self.row(i).iter().map(|w| w.count_ones()).sum()
    }

    pub(crate) fn transpose(&self) -> BitMatrix {
        let mut t = BitMatrix::zeros(self.n);
        for i in 0..self.n {
            for (wi, &word) in self.row(i).iter().enumerate() {
                let mut w = word;
                while w != 0 {
                    let j = wi * 64 + w.trailing_zeros() as usize;
                    t.set(j, i, true);
                    w &= w - 1;
                }
            }
        }
        t
    }

    /// Column indices of the set bits of row `i`.
    pub(crate) fn row_indices(&self, i: usize) -> impl Iterator<Item = usize> + '_ {
        self.row(i).iter().enumerate().flat_map(|(wi, &word)| {
            let mut w = word;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let j = wi * 64 + w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(j)
                }
            })
        })
    }

    /// `out = scale · M x`.
    ///
    /// Four-Russians style: for each group of 8 columns a 256-entry table of
    /// partial sums of `x` is built once, then each row costs one lookup per
    /// byte.
    pub(crate) fn matvec(&self, x: &[f64], scale: f64, out: &mut [f64]) {
        assert_eq!(x.len(), self.n);
        assert_eq!(out.len(), self.n);
        let groups = self.n.div_ceil(8);
        let mut tables = vec![0.0f64; groups * 256];
        for g in 0..groups {
            let t = &mut tables[g * 256..(g + 1) * 256];
            for m in 1usize..256 {
                let col = 8 * g + m.trailing_zeros() as usize;
                let xv = if col < self.n { x[col] } else { 0.0 };
                t[m] = t[m & (m - 1)] + xv;
            }
        }
        for (i, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (wi, &word) in self.row(i).iter().enumerate() {
                if word == 0 {
                    continue;
                }
                let mut w = word;
                let base = wi * 8 * 256;
                for b in 0..8 {
                    let byte = (w & 0xff) as usize;
                    if byte != 0 {
                        s += tables[base + b * 256 + byte];
                    }
                    w >>= 8;
                    if w == 0 {
                        break;
                    }
                }
            }
            *o = scale * s;
        }
    }

    /// Bytes of row `i` with bit `b` of byte `g` holding column `8g + b`.
    pub(crate) fn row_bytes(&self, i: usize) -> Vec<u8> {
        let nbytes = self.n.div_ceil(8);
        self.row(i)
            .iter()
            .flat_map(|w| w.to_le_bytes())
            .take(nbytes)
            .collect()
    }

    pub(crate) fn set_row_bytes(&mut self, i: usize, bytes: &[u8]) {
        let words = self.words;
        let row = self.row_mut(i);
        for w in row.iter_mut() {
            *w = 0;
        }
        for (k, &byte) in bytes.iter().enumerate() {
            row[k / 8] |= (byte as u64) << (8 * (k % 8));
        }
        debug_assert_eq!(row.len(), words);
    }
}
