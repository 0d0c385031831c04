/// One retained item with its validation score.
#[derive(Clone, Debug, PartialEq)]
pub struct RegistryEntry<C> {
    pub score: f64,
    pub epoch: usize,
    pub item: C,
}

/// The `k` best-scoring items seen so far, best first; equal scores keep
/// the earlier epoch ahead.
#[derive(Clone, Debug, PartialEq)]
pub struct TopKRegistry<C> {
    k: usize,
    entries: Vec<RegistryEntry<C>>,
}

pub const DEFAULT_TOP_K: usize = 5;

impl<C> TopKRegistry<C> {
    pub fn new(k: usize) -> Self {
        Self { k, entries: Vec::with_capacity(k + 1) }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Inserts the item if it ranks among the best `k`; returns whether it
    /// was kept. NaN scores are never kept.
    pub fn offer(&mut self, score: f64, epoch: usize, item: C) -> bool {
        if score.is_nan() || self.k == 0 {
            return false;
        }
        let pos = self.entries.partition_point(|e| e.score > score || (e.score == score && e.epoch <= epoch));
        if pos >= self.k {
            return false;
        }
        self.entries.insert(pos, RegistryEntry { score, epoch, item });
        self.entries.truncate(self.k);
        true
    }

    pub fn entries(&self) -> &[RegistryEntry<C>] {
        &self.entries
    }

    pub fn into_entries(self) -> Vec<RegistryEntry<C>> {
        self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn best(&self) -> Option<&RegistryEntry<C>> {
        self.entries.first()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn keeps_best_five() {
        let mut r = TopKRegistry::new(5);
        for (epoch, s) in [0.3, 0.9, 0.1, 0.5, 0.7, 0.2, 0.8, 0.4, 0.6].into_iter().enumerate() {
            r.offer(s, epoch, ());
        }
        let scores: Vec<f64> = r.entries().iter().map(|e| e.score).collect();
        assert_eq!(scores, vec![0.9, 0.8, 0.7, 0.6, 0.5]);
    }

    #[test]
    fn ties_prefer_earlier_epoch() {
        let mut r = TopKRegistry::new(2);
        assert!(r.offer(0.5, 0, "a"));
        assert!(r.offer(0.5, 1, "b"));
        assert!(!r.offer(0.5, 2, "c"));
        assert!(!r.offer(f64::NAN, 3, "d"));
        assert_eq!(r.entries().iter().map(|e| e.item).collect::<Vec<_>>(), vec!["a", "b"]);
    }
}
