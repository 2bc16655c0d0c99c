//! Binary cache files: a magic header, a JSON key, then raw little-endian
//! Q and V tables. Softmax policies are recomputed on load.

use std::io::{self, Read, Write};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AgentPlan, CacheEntry, PlannerConfig, PolicyCache, PolicySource, N_ACTIONS};
use crate::inference::{HypothesisSpace, SpaceMode};
use crate::world::{RewardParams, StateSpace, WorldLayout};

const MAGIC: &[u8; 8] = b"SPCACHE\0";
const VERSION: u32 = 1;

/// Everything a cache's contents depend on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheKey {
    pub layout_hash: String,
    pub params: RewardParams,
    pub config: PlannerConfig,
    pub mode: SpaceMode,
    pub n_states: usize,
}

impl CacheKey {
    /// The key a cache built from these inputs would carry.
    pub fn new(layout: &WorldLayout, params: RewardParams, config: PlannerConfig, mode: SpaceMode) -> Self {
        CacheKey {
            layout_hash: layout.hash(),
            params,
            config,
            mode,
            n_states: StateSpace::new(layout).len(),
        }
    }

    pub fn of(cache: &PolicyCache) -> Self {
        CacheKey {
            layout_hash: cache.layout().hash(),
            params: *cache.params(),
            config: *cache.config(),
            mode: cache.hypotheses().mode(),
            n_states: cache.state_space().len(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CacheFileError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("not a policy cache file")]
    BadMagic,
    #[error("unsupported cache version {0}")]
    Version(u32),
    #[error("malformed cache key: {0}")]
    Key(#[from] serde_json::Error),
    #[error("cache was built for a different setup (expected {expected:?}, found {found:?})")]
    KeyMismatch {
        expected: Box<CacheKey>,
        found: Box<CacheKey>,
    },
    #[error("corrupt cache file: {0}")]
    Corrupt(&'static str),
}

pub fn save_cache<W: Write>(cache: &PolicyCache, mut w: W) -> io::Result<()> {
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let key = serde_json::to_vec(&CacheKey::of(cache)).map_err(io::Error::other)?;
    w.write_all(&(key.len() as u64).to_le_bytes())?;
    w.write_all(&key)?;
    let (cheese, robot) = cache.plans();
    for plans in [cheese, robot] {
        w.write_all(&(plans.len() as u32).to_le_bytes())?;
        for plan in plans {
            w.write_all(&plan.residual.to_le_bytes())?;
            w.write_all(&(plan.iterations as u64).to_le_bytes())?;
            for x in plan.q.as_slice().iter().chain(plan.v.as_slice()) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
    }
    let entries = cache.entries();
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for e in entries {
        for src in [e.cheese, e.robot] {
            let code = match src {
                PolicySource::Uniform => u32::MAX,
                PolicySource::Planned(i) => i as u32,
            };
            w.write_all(&code.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_array<const N: usize>(r: &mut impl Read) -> io::Result<[u8; N]> {
    let mut buf = [0u8; N];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u32(r: &mut impl Read) -> io::Result<u32> {
    Ok(u32::from_le_bytes(read_array(r)?))
}

fn read_u64(r: &mut impl Read) -> io::Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64(r: &mut impl Read) -> io::Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}

/// Loads a cache written by [`save_cache`], checking it matches `expected`.
pub fn load_cache<R: Read>(layout: &WorldLayout, expected: &CacheKey, mut r: R) -> Result<PolicyCache, CacheFileError> {
    if &read_array::<8>(&mut r)? != MAGIC {
        return Err(CacheFileError::BadMagic);
    }
    let version = read_u32(&mut r)?;
    if version != VERSION {
        return Err(CacheFileError::Version(version));
    }
    let key_len = read_u64(&mut r)? as usize;
    if key_len > 1 << 20 {
        return Err(CacheFileError::Corrupt("key too long"));
    }
    let mut key = vec![0u8; key_len];
    r.read_exact(&mut key)?;
    let found: CacheKey = serde_json::from_slice(&key)?;
    if &found != expected || found.layout_hash != layout.hash() {
        return Err(CacheFileError::KeyMismatch {
            expected: Box::new(expected.clone()),
            found: Box::new(found),
        });
    }

    let space = Arc::new(StateSpace::build(Arc::new(layout.clone()), true));
    if space.len() != found.n_states {
        return Err(CacheFileError::Corrupt("state count"));
    }
    let n = space.len();
    let read_plans = |r: &mut R| -> Result<Vec<AgentPlan>, CacheFileError> {
        let count = read_u32(r)? as usize;
        let mut plans = Vec::with_capacity(count);
        for _ in 0..count {
            let residual = read_f64(r)?;
            let iterations = read_u64(r)? as usize;
            let q = (0..n * N_ACTIONS)
                .map(|_| read_f64(r))
                .collect::<io::Result<Vec<_>>>()?;
            let v = (0..n).map(|_| read_f64(r)).collect::<io::Result<Vec<_>>>()?;
            plans.push(AgentPlan::new(q, v, residual, iterations, found.config.beta));
        }
        Ok(plans)
    };
    let cheese = read_plans(&mut r)?;
    let robot = read_plans(&mut r)?;

    let hypotheses = HypothesisSpace::new(found.mode);
    let count = read_u32(&mut r)? as usize;
    if count != hypotheses.len() {
        return Err(CacheFileError::Corrupt("entry count"));
    }
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let mut src = |limit: usize| -> Result<PolicySource, CacheFileError> {
            match read_u32(&mut r)? {
                u32::MAX => Ok(PolicySource::Uniform),
                i if (i as usize) < limit => Ok(PolicySource::Planned(i as usize)),
                _ => Err(CacheFileError::Corrupt("plan index")),
            }
        };
        let cheese_src = src(cheese.len())?;
        let robot_src = src(robot.len())?;
        entries.push(CacheEntry {
            cheese: cheese_src,
            robot: robot_src,
        });
    }

    Ok(PolicyCache::from_parts(
        space,
        hypotheses,
        found.params,
        found.config,
        cheese,
        robot,
        entries,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::build_hypothesis_space;
    use crate::planner::{build_policy_cache, Agent};
    use crate::world::parse_layout;

    #[test]
    fn save_load_preserves_values() {
        let layout = parse_layout("P..\n..G\n").unwrap();
        let cache = build_policy_cache(
            &layout,
            &build_hypothesis_space(),
            &RewardParams::default(),
            &PlannerConfig::default(),
        )
        .unwrap();
        let mut bytes = Vec::new();
        save_cache(&cache, &mut bytes).unwrap();
        let loaded = load_cache(&layout, &CacheKey::of(&cache), bytes.as_slice()).unwrap();
        assert_eq!(loaded.content_hash(), cache.content_hash());
        for h in 0..cache.len() {
            assert_eq!(loaded.entry(h), cache.entry(h));
            assert_eq!(loaded.plan(h, Agent::Robot), cache.plan(h, Agent::Robot));
        }
    }

    #[test]
    fn mismatched_key_rejected() {
        let layout = parse_layout("P..\n..G\n").unwrap();
        let cache = build_policy_cache(
            &layout,
            &build_hypothesis_space(),
            &RewardParams::default(),
            &PlannerConfig::default(),
        )
        .unwrap();
        let mut bytes = Vec::new();
        save_cache(&cache, &mut bytes).unwrap();
        let mut key = CacheKey::of(&cache);
        key.config.beta = 3.0;
        assert!(matches!(
            load_cache(&layout, &key, bytes.as_slice()),
            Err(CacheFileError::KeyMismatch { .. })
        ));
        assert!(matches!(
            load_cache(&layout, &CacheKey::of(&cache), &b"garbage!"[..]),
            Err(CacheFileError::BadMagic)
        ));
    }
}
