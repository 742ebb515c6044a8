/// Tracks the largest label seen on each incoming link and derives the
/// largest label that may be processed: one below the minimum over links.
#[derive(Debug, Clone)]
pub struct LabelGate {
    largest: Vec<Option<u64>>,
}

impl LabelGate {
    pub fn new(links: usize) -> Self {
        assert!(links > 0);
        Self { largest: vec![None; links] }
    }

    /// Record `label` on `link`. Returns false if it regresses below a label
    /// already seen there.
    pub fn observe(&mut self, link: usize, label: u64) -> bool {
        match self.largest[link] {
            Some(prev) if label < prev => false,
            _ => {
                self.largest[link] = Some(label);
                true
            }
        }
    }

    pub fn largest(&self, link: usize) -> Option<u64> {
        self.largest[link]
    }

    /// Labels up to and including the returned value are ready. `None` until
    /// every link has carried a label of at least 1.
    pub fn limit(&self) -> Option<u64> {
        let mut min = u64::MAX;
        for l in &self.largest {
            min = min.min((*l)?);
        }
        min.checked_sub(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn min_rule() {
        let mut g = LabelGate::new(2);
        assert_eq!(g.limit(), None);
        g.observe(0, 0);
        assert_eq!(g.limit(), None);
        g.observe(0, 5);
        g.observe(1, 7);
        assert_eq!(g.limit(), Some(4));
        assert!(!g.observe(1, 6));
        assert_eq!(g.largest(1), Some(7));
    }

    #[test]
    fn label_zero_everywhere_is_not_ready() {
        let mut g = LabelGate::new(2);
        g.observe(0, 0);
        g.observe(1, 0);
        assert_eq!(g.limit(), None);
        g.observe(0, 1);
        g.observe(1, 1);
        assert_eq!(g.limit(), Some(0));
    }
}
