//! Fenwick tree over non-negative weights with prefix search.

#[derive(Debug, Clone)]
pub(crate) struct Fenwick {
    tree: Vec<f64>,
    top: usize,
}

impl Fenwick {
    pub(crate) fn new(n: usize) -> Self {
        let top = if n == 0 { 0 } else { 1 << (usize::BITS - 1 - n.leading_zeros()) };
        Fenwick {
            tree: vec![0.0; n + 1],
            top,
        }
    }

    pub(crate) fn from_weights(w: &[f64]) -> Self {
        let mut f = Fenwick::new(w.len());
        f.tree[1..].copy_from_slice(w);
        let n = w.len();
        for i in 1..=n {
            let parent = i + (i & i.wrapping_neg());
            if parent <= n {
                f.tree[parent] += f.tree[i];
            }
        }
        f
    }

    pub(crate) fn add(&mut self, index: usize, delta: f64) {
        let mut i = index + 1;
        while i < self.tree.len() {
            self.tree[i] += delta;
            i += i & i.wrapping_neg();
        }
    }

    #[cfg(test)]
    pub(crate) fn total(&self) -> f64 {
        let mut i = self.tree.len() - 1;
        let mut s = 0.0;
        while i > 0 {
            s += self.tree[i];
            i &= i - 1;
        }
        s
    }

    /// Smallest index whose inclusive prefix sum exceeds `target`, clamped to
    /// the last index.
    pub(crate) fn search(&self, mut target: f64) -> usize {
        let n = self.tree.len() - 1;
        let mut pos = 0;
        let mut step = self.top;
        while step > 0 {
            let next = pos + step;
            if next <= n && self.tree[next] <= target {
                pos = next;
                target -= self.tree[next];
            }
            step >>= 1;
        }
        pos.min(n - 1)
    }
}
