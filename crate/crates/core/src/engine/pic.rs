//! Per-site polymorphic inline caches.

use crate::shape::ShapeId;

/// A cascade of shape tests for one property-access site. Cases are kept in
/// first-seen order; once a site would exceed its limit it becomes
/// megamorphic and stops testing shapes.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PicSite {
    pub cases: Vec<ShapeId>,
    pub megamorphic: bool,
}

/// Result of dispatching one access through a site.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dispatch {
    /// Shape tests executed.
    pub tests: u32,
    /// Whether the access was resolved by a cache case (as opposed to the
    /// megamorphic generic lookup).
    pub cached: bool,
}

impl PicSite {
    pub fn dispatch(&mut self, shape: ShapeId, limit: usize) -> Dispatch {
        if self.megamorphic {
            return Dispatch { tests: 0, cached: false };
        }
        if let Some(pos) = self.cases.iter().position(|&s| s == shape) {
            return Dispatch { tests: pos as u32 + 1, cached: true };
        }
        let tests = self.cases.len() as u32;
        if self.cases.len() < limit {
            self.cases.push(shape);
            Dispatch { tests, cached: true }
        } else {
            self.megamorphic = true;
            self.cases.clear();
            Dispatch { tests, cached: false }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cascade_counts_position() {
        let mut p = PicSite::default();
        assert_eq!(p.dispatch(ShapeId(1), 8), Dispatch { tests: 0, cached: true });
        assert_eq!(p.dispatch(ShapeId(1), 8), Dispatch { tests: 1, cached: true });
        assert_eq!(p.dispatch(ShapeId(2), 8), Dispatch { tests: 1, cached: true });
        assert_eq!(p.dispatch(ShapeId(2), 8), Dispatch { tests: 2, cached: true });
        assert_eq!(p.cases, vec![ShapeId(1), ShapeId(2)]);
    }

    #[test]
    fn overflow_goes_megamorphic() {
        let mut p = PicSite::default();
        p.dispatch(ShapeId(1), 1);
        assert_eq!(p.dispatch(ShapeId(2), 1), Dispatch { tests: 1, cached: false });
        assert!(p.megamorphic);
        assert_eq!(p.dispatch(ShapeId(1), 1), Dispatch { tests: 0, cached: false });
    }

    proptest! {
        #[test]
        fn chain_never_exceeds_limit(shapes in prop::collection::vec(0u32..20, 0..100), limit in 1usize..10) {
            let mut p = PicSite::default();
            let mut seen: Vec<u32> = Vec::new();
            for s in shapes {
                let d = p.dispatch(ShapeId(s), limit);
                prop_assert!(p.cases.len() <= limit);
                prop_assert!(d.tests as usize <= limit);
                if !seen.contains(&s) {
                    seen.push(s);
                }
                // Model: polymorphic while the distinct shapes fit, megamorphic after.
                prop_assert_eq!(p.megamorphic, seen.len() > limit);
                if !p.megamorphic {
                    let want: Vec<ShapeId> = seen.iter().map(|&x| ShapeId(x)).collect();
                    prop_assert_eq!(&p.cases, &want);
                }
            }
        }
    }
}
