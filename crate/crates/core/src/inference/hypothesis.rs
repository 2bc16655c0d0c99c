use std::fmt;

use serde::{Deserialize, Serialize};

use crate::world::Tile;

/// The social-alignment values the audience considers.
pub const RHO_VALUES: [i8; 5] = [-3, -1, 0, 1, 3];

/// A latent explanation of the characters' behaviour.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Hypothesis {
    pub g_cheese: Tile,
    pub g_robot: Option<Tile>,
    pub rho: i8,
    pub r_robot: bool,
    pub r_cheese: bool,
}

impl Hypothesis {
    pub fn rational(g_cheese: Tile, g_robot: Option<Tile>, rho: i8) -> Self {
        Hypothesis {
            g_cheese,
            g_robot,
            rho,
            r_robot: true,
            r_cheese: true,
        }
    }

    pub fn is_rational_pair(&self) -> bool {
        self.r_robot && self.r_cheese
    }
}

impl fmt::Display for Hypothesis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let g_robot = self.g_robot.map_or("none", Tile::name);
        write!(
            f,
            "<G_cheese={}, G_robot={}, rho={:+}, R_robot={}, R_cheese={}>",
            self.g_cheese, g_robot, self.rho, self.r_robot, self.r_cheese
        )
    }
}

/// How irrational hypotheses are enumerated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpaceMode {
    /// Latents with no effect on the likelihood under irrationality are
    /// collapsed to one canonical value (36 hypotheses).
    #[default]
    Collapsed,
    /// Full product with only the "irrational cheese implies rho = 0"
    /// constraint (72 hypotheses).
    Full,
}

/// Ordered, immutable list of hypotheses.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypothesisSpace {
    mode: SpaceMode,
    hypotheses: Vec<Hypothesis>,
}

const G_ROBOT: [Option<Tile>; 3] = [Some(Tile::Pink), Some(Tile::Green), None];

impl HypothesisSpace {
    pub fn new(mode: SpaceMode) -> Self {
        let mut hypotheses = Vec::new();
        let rational_block = |r_robot: bool, r_cheese: bool, out: &mut Vec<Hypothesis>| {
            for g_cheese in Tile::ALL {
                for g_robot in G_ROBOT {
                    for rho in RHO_VALUES {
                        if !r_cheese && rho != 0 {
                            continue;
                        }
                        out.push(Hypothesis {
                            g_cheese,
                            g_robot,
                            rho,
                            r_robot,
                            r_cheese,
                        });
                    }
                }
            }
        };
        match mode {
            SpaceMode::Collapsed => {
                rational_block(true, true, &mut hypotheses);
                for g_robot in G_ROBOT {
                    hypotheses.push(Hypothesis {
                        g_cheese: Tile::Pink,
                        g_robot,
                        rho: 0,
                        r_robot: true,
                        r_cheese: false,
                    });
                }
                for g_cheese in Tile::ALL {
                    hypotheses.push(Hypothesis {
                        g_cheese,
                        g_robot: None,
                        rho: 0,
                        r_robot: false,
                        r_cheese: true,
                    });
                }
                hypotheses.push(Hypothesis {
                    g_cheese: Tile::Pink,
                    g_robot: None,
                    rho: 0,
                    r_robot: false,
                    r_cheese: false,
                });
            }
            SpaceMode::Full => {
                for (r_robot, r_cheese) in [(true, true), (false, true), (true, false), (false, false)] {
                    rational_block(r_robot, r_cheese, &mut hypotheses);
                }
            }
        }
        HypothesisSpace { mode, hypotheses }
    }

    pub fn mode(&self) -> SpaceMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.hypotheses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hypotheses.is_empty()
    }

    pub fn hypotheses(&self) -> &[Hypothesis] {
        &self.hypotheses
    }

    pub fn get(&self, index: usize) -> Option<&Hypothesis> {
        self.hypotheses.get(index)
    }

    pub fn index_of(&self, h: &Hypothesis) -> Option<usize> {
        self.hypotheses.iter().position(|x| x == h)
    }

    /// Membership mask for a predicate, in space order.
    pub fn mask(&self, pred: impl Fn(&Hypothesis) -> bool) -> Vec<bool> {
        self.hypotheses.iter().map(pred).collect()
    }
}

impl Default for HypothesisSpace {
    fn default() -> Self {
        HypothesisSpace::new(SpaceMode::Collapsed)
    }
}

/// The canonical 36-hypothesis space.
pub fn build_hypothesis_space() -> HypothesisSpace {
    HypothesisSpace::new(SpaceMode::Collapsed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn collapsed_counts() {
        let space = build_hypothesis_space();
        // Enumerate the constrained product and collapse unidentifiable latents.
        let mut oracle = HashSet::new();
        for g_cheese in Tile::ALL {
            for g_robot in G_ROBOT {
                for rho in RHO_VALUES {
                    for r_robot in [true, false] {
                        for r_cheese in [true, false] {
                            let mut h = Hypothesis {
                                g_cheese,
                                g_robot,
                                rho,
                                r_robot,
                                r_cheese,
                            };
                            if !r_cheese && rho != 0 {
                                continue;
                            }
                            if !r_cheese {
                                h.g_cheese = Tile::Pink;
                            }
                            if !r_robot {
                                h.g_robot = None;
                                h.rho = 0;
                            }
                            oracle.insert(h);
                        }
                    }
                }
            }
        }
        assert_eq!(oracle.len(), 36);
        assert_eq!(space.len(), 36);
        let listed: HashSet<_> = space.hypotheses().iter().copied().collect();
        assert_eq!(listed, oracle);
        assert_eq!(space.hypotheses().iter().filter(|h| h.is_rational_pair()).count(), 30);
    }

    #[test]
    fn constraints_hold() {
        for mode in [SpaceMode::Collapsed, SpaceMode::Full] {
            for h in HypothesisSpace::new(mode).hypotheses() {
                if !h.r_cheese {
                    assert_eq!(h.rho, 0);
                }
            }
        }
        for h in build_hypothesis_space().hypotheses() {
            if !h.r_robot {
                assert_eq!((h.g_robot, h.rho), (None, 0));
            }
        }
    }

    #[test]
    fn full_space_has_72() {
        let space = HypothesisSpace::new(SpaceMode::Full);
        assert_eq!(space.len(), 72);
        let unique: HashSet<_> = space.hypotheses().iter().collect();
        assert_eq!(unique.len(), 72);
    }

    #[test]
    fn ordering_is_stable() {
        let a = build_hypothesis_space();
        let b = build_hypothesis_space();
        assert_eq!(a, b);
        assert_eq!(a.index_of(&a.hypotheses()[17]), Some(17));
    }
}
