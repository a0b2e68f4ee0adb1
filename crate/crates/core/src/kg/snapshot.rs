//! Graph snapshot file: a JSON document with an entities section and a
//! triplets section. The adjacency index is rebuilt on load.

use serde::{Deserialize, Serialize};

use super::{Entity, KgError, KnowledgeGraph, Triplet};

pub const SNAPSHOT_FORMAT: &str = "ragbench-knowledge-graph";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Snapshot {
    format: String,
    version: u32,
    entities: Vec<Entity>,
    triplets: Vec<Triplet>,
}

impl KnowledgeGraph {
    pub fn to_snapshot(&self) -> String {
        let snapshot = Snapshot {
            format: SNAPSHOT_FORMAT.to_owned(),
            version: SNAPSHOT_VERSION,
            entities: self.entities.values().cloned().collect(),
            triplets: self.triplets.clone(),
        };
        serde_json::to_string_pretty(&snapshot).expect("graph snapshot serializes")
    }

    pub fn from_snapshot(text: &str) -> Result<Self, KgError> {
        let snapshot: Snapshot = serde_json::from_str(text).map_err(|e| KgError::Snapshot(e.to_string()))?;
        if snapshot.format != SNAPSHOT_FORMAT {
            return Err(KgError::Snapshot(format!("unexpected format {:?}", snapshot.format)));
        }
        if snapshot.version != SNAPSHOT_VERSION {
            return Err(KgError::Snapshot(format!("unsupported version {}", snapshot.version)));
        }
        let mut graph = KnowledgeGraph::new();
        for entity in snapshot.entities {
            graph.entities.insert(entity.id.clone(), entity);
        }
        for (index, triplet) in snapshot.triplets.iter().enumerate() {
            for id in triplet.endpoints() {
                if !graph.entities.contains_key(id) {
                    return Err(KgError::Snapshot(format!(
                        "triplet {index} references unknown entity {id}"
                    )));
                }
            }
        }
        graph.triplets = snapshot.triplets;
        graph.adjacency = graph.rebuild_adjacency();
        graph.check_consistency()?;
        Ok(graph)
    }
}
