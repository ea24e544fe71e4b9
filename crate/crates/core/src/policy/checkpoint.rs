//! Binary policy checkpoint, little-endian throughout:
//!
//! ```text
//! b"CNPOLICY"  u32 version
//! u32 input  u32 hidden  u32 dense1  u32 dense2  u32 actions
//! f64 goal   f64 step    f64 collision  f64 gamma
//! u64 episodes  u64 seed
//! u64 parameter count, then that many f64 in network layout order
//! ```

use std::fs;
use std::path::Path;

use super::{PolicyError, PolicyNetwork, PolicyShape, RewardSpec};

const MAGIC: &[u8; 8] = b"CNPOLICY";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: PolicyNetwork,
    pub reward: RewardSpec,
    /// Training episodes completed when the checkpoint was taken.
    pub episodes: u64,
    pub seed: u64,
}

struct Reader<'a> {
    bytes: &'a [u8],
    at: usize,
}

impl Reader<'_> {
    fn take<const N: usize>(&mut self) -> Result<[u8; N], PolicyError> {
        let end = self.at + N;
        let chunk = self.bytes.get(self.at..end).ok_or_else(|| PolicyError::Checkpoint("truncated file".into()))?;
        self.at = end;
        Ok(chunk.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32, PolicyError> {
        self.take().map(u32::from_le_bytes)
    }

    fn u64(&mut self) -> Result<u64, PolicyError> {
        self.take().map(u64::from_le_bytes)
    }

    fn f64(&mut self) -> Result<f64, PolicyError> {
        self.take().map(f64::from_le_bytes)
    }
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let s = self.network.shape();
        let params = self.network.params();
        let mut out = Vec::with_capacity(96 + 8 * params.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        for v in [s.input, s.hidden, s.dense1, s.dense2, s.actions] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for v in [self.reward.goal, self.reward.step, self.reward.collision, self.reward.gamma] {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out.extend_from_slice(&self.episodes.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&(params.len() as u64).to_le_bytes());
        for p in params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PolicyError> {
        let mut r = Reader { bytes, at: 0 };
        if &r.take::<8>()? != MAGIC {
            return Err(PolicyError::Checkpoint("not a policy checkpoint".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(PolicyError::Checkpoint(format!("unsupported version {version}")));
        }
        let mut dims = [0usize; 5];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let shape = PolicyShape { input: dims[0], hidden: dims[1], dense1: dims[2], dense2: dims[3], actions: dims[4] };
        let reward = RewardSpec { goal: r.f64()?, step: r.f64()?, collision: r.f64()?, gamma: r.f64()? };
        reward.validate()?;
        let episodes = r.u64()?;
        let seed = r.u64()?;
        let count = r.u64()?;
        if count != shape.param_count() as u64 {
            return Err(PolicyError::Checkpoint(format!(
                "header declares {count} parameters, layer sizes imply {}",
                shape.param_count()
            )));
        }
        let mut params = Vec::with_capacity(shape.param_count());
        for _ in 0..count {
            params.push(r.f64()?);
        }
        if r.at != bytes.len() {
            return Err(PolicyError::Checkpoint("trailing bytes".into()));
        }
        Ok(Self { network: PolicyNetwork::from_params(shape, params)?, reward, episodes, seed })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), PolicyError> {
        let path = path.as_ref();
        fs::write(path, self.to_bytes()).map_err(|source| PolicyError::Io { path: path.display().to_string(), source })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PolicyError> {
        let path = path.as_ref();
        let bytes = fs::read(path).map_err(|source| PolicyError::Io { path: path.display().to_string(), source })?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> Checkpoint {
        let shape = PolicyShape { input: 5, hidden: 4, dense1: 3, dense2: 3, actions: 9 };
        Checkpoint {
            network: PolicyNetwork::new(shape, 11).unwrap(),
            reward: RewardSpec::default(),
            episodes: 42,
            seed: 9,
        }
    }

    #[test]
    fn round_trip_is_exact() {
        let c = small();
        let bytes = c.to_bytes();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = small().to_bytes();
        assert!(Checkpoint::from_bytes(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = bytes;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
