//! Small combinatorial enumerators.

/// Lexicographic k-subsets of `0..n`.
pub struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    pub fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

/// Set partitions of `0..k` into exactly `d` non-empty blocks, as restricted
/// growth strings (`label[0] = 0`, each new label is one above the max so far).
pub struct SetPartitions {
    k: usize,
    d: usize,
    label: Vec<usize>,
    done: bool,
}

impl SetPartitions {
    pub fn new(k: usize, d: usize) -> Self {
        let mut s = SetPartitions {
            k,
            d,
            label: vec![0; k],
            done: d == 0 || d > k,
        };
        if !s.done && !s.valid() {
            s.advance();
        }
        s
    }

    fn valid(&self) -> bool {
        self.label.iter().max().map_or(0, |m| m + 1) == self.d
    }

    fn step(&mut self) -> bool {
        // next restricted growth string with labels < d
        let k = self.k;
        let mut i = k;
        while i > 1 {
            i -= 1;
            let m = self.label[..i].iter().copied().max().unwrap_or(0);
            if self.label[i] <= m && self.label[i] + 1 < self.d {
                self.label[i] += 1;
                for j in i + 1..k {
                    self.label[j] = 0;
                }
                return true;
            }
        }
        false
    }

    fn advance(&mut self) {
        loop {
            if !self.step() {
                self.done = true;
                return;
            }
            if self.valid() {
                return;
            }
        }
    }
}

impl Iterator for SetPartitions {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.label.clone();
        self.advance();
        Some(out)
    }
}

/// Stirling number of the second kind as an f64 (exact for the sizes used).
pub fn stirling2(k: usize, d: usize) -> f64 {
    let mut row = vec![0.0f64; d + 1];
    row[0] = 1.0;
    for n in 1..=k {
        for j in (1..=d.min(n)).rev() {
            row[j] = j as f64 * row[j] + row[j - 1];
        }
        row[0] = 0.0;
    }
    row[d]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn combination_counts() {
        assert_eq!(Combinations::new(5, 2).count(), 10);
        assert_eq!(Combinations::new(4, 0).count(), 1);
        assert_eq!(Combinations::new(3, 4).count(), 0);
    }

    #[test]
    fn set_partition_counts_match_stirling() {
        for k in 1..=7 {
            for d in 1..=k {
                assert_eq!(SetPartitions::new(k, d).count() as f64, stirling2(k, d), "k={k} d={d}");
            }
        }
    }
}
