//! Versioned JSON document holding a floor plan and its episodes.
//!
//! ```json
//! {"version":1,"cell_size":0.1,"width":W,"height":H,"occupancy":"0110…","episodes":[…]}
//! ```
//!
//! `occupancy` is a row-major bitstring, `1` for occupied. Floats are written
//! with shortest round-trip formatting, so reloading is bit-exact.

use super::{EpisodeSpec, FloorPlan, Room};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ENV_VERSION: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
struct EnvDocumentRepr {
    version: u32,
    cell_size: f64,
    width: usize,
    height: usize,
    occupancy: String,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    rooms: Vec<Room>,
    #[serde(default)]
    episodes: Vec<EpisodeSpec>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnvDocument {
    pub plan: FloorPlan,
    pub episodes: Vec<EpisodeSpec>,
}

impl EnvDocument {
    pub fn new(plan: FloorPlan, episodes: Vec<EpisodeSpec>) -> Self {
        EnvDocument { plan, episodes }
    }

    pub fn to_json(&self) -> Result<String> {
        let plan = &self.plan;
        let repr = EnvDocumentRepr {
            version: ENV_VERSION,
            cell_size: plan.cell_size(),
            width: plan.width(),
            height: plan.height(),
            occupancy: plan.occupancy().iter().map(|&o| if o { '1' } else { '0' }).collect(),
            seed: plan.seed,
            rooms: plan.rooms.clone(),
            episodes: self.episodes.clone(),
        };
        Ok(serde_json::to_string(&repr)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let repr: EnvDocumentRepr = serde_json::from_str(text)?;
        if repr.version != ENV_VERSION {
            return Err(Error::Version { found: repr.version, expected: ENV_VERSION });
        }
        let occupied = repr
            .occupancy
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::Malformed(format!("invalid occupancy character {other:?}"))),
            })
            .collect::<Result<Vec<bool>>>()?;
        let mut plan = FloorPlan::from_occupancy(repr.width, repr.height, repr.cell_size, occupied)?;
        plan.seed = repr.seed;
        plan.rooms = repr.rooms;
        Ok(EnvDocument { plan, episodes: repr.episodes })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{generate_floorplan, sample_episode, GenParams};

    #[test]
    fn round_trip_is_bit_exact() {
        let plan = generate_floorplan(5, &GenParams::default()).unwrap();
        let episodes = (0..4).map(|s| sample_episode(&plan, s).unwrap()).collect();
        let doc = EnvDocument::new(plan, episodes);
        let text = doc.to_json().unwrap();
        let back = EnvDocument::from_json(&text).unwrap();
        assert_eq!(doc, back);
        assert_eq!(text, back.to_json().unwrap());
        for (a, b) in doc.episodes.iter().zip(&back.episodes) {
            assert_eq!(a.geodesic_ref.to_bits(), b.geodesic_ref.to_bits());
        }
    }

    #[test]
    fn rejects_wrong_version() {
        let text = r#"{"version":2,"cell_size":0.1,"width":3,"height":3,"occupancy":"111111111"}"#;
        assert!(matches!(EnvDocument::from_json(text), Err(Error::Version { found: 2, .. })));
    }
}
