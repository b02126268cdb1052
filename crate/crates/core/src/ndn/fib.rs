use std::collections::BTreeMap;

use super::FaceId;
use crate::naming::FirmwareName;

/// Prefix → next-hop table with an optional default route.
#[derive(Debug, Clone, Default)]
pub struct Fib {
    routes: BTreeMap<Vec<String>, FaceId>,
    default: Option<FaceId>,
}

impl Fib {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_default(face: FaceId) -> Self {
        Self {
            routes: BTreeMap::new(),
            default: Some(face),
        }
    }

    pub fn set_default(&mut self, face: Option<FaceId>) {
        self.default = face;
    }

    pub fn add_route<S: AsRef<str>>(&mut self, prefix: &[S], face: FaceId) {
        let key = prefix.iter().map(|c| c.as_ref().to_owned()).collect();
        self.routes.insert(key, face);
    }

    /// Longest-prefix match, falling back to the default route.
    pub fn lookup(&self, name: &FirmwareName) -> Option<FaceId> {
        if !self.routes.is_empty() {
            let components = name.components();
            for len in (1..=components.len()).rev() {
                if let Some(face) = self.routes.get(&components[..len]) {
                    return Some(*face);
                }
            }
        }
        self.default
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::naming::BaseName;

    #[test]
    fn longest_prefix_wins() {
        let mut fib = Fib::with_default(FaceId(9));
        fib.add_route(&["d"], FaceId(1));
        fib.add_route(&["d", "v", "c"], FaceId(2));
        let n = BaseName::new("d", "v", "c", 5).unwrap().chunk(1);
        assert_eq!(fib.lookup(&n), Some(FaceId(2)));
        let other = BaseName::new("d", "w", "c", 5).unwrap().manifest();
        assert_eq!(fib.lookup(&other), Some(FaceId(1)));
        let unrelated = BaseName::new("x", "w", "c", 5).unwrap().manifest();
        assert_eq!(fib.lookup(&unrelated), Some(FaceId(9)));
    }

    #[test]
    fn empty_fib_has_no_route() {
        let n = BaseName::new("d", "v", "c", 5).unwrap().chunk(1);
        assert_eq!(Fib::new().lookup(&n), None);
    }
}
