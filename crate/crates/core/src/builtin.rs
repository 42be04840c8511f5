//! Built-in instances.

use crate::model::{DemandMatrix, Topology};

fn link(id: &str, src: &str, dst: &str, capacity: f64) -> (String, String, String, f64) {
    (id.to_string(), src.to_string(), dst.to_string(), capacity)
}

/// Four unit-capacity links `1-3, 3-4, 1-2, 2-3`; demand 1 for `(1,3)` and 0.9 for `(3,4)`.
///
/// Links are stored in the order `(1,3), (3,4), (1,2), (2,3)`.
pub fn fig1() -> (Topology, DemandMatrix) {
    let topo = Topology::new(
        ["1", "2", "3", "4"],
        [
            link("1-3", "1", "3", 1.0),
            link("3-4", "3", "4", 1.0),
            link("1-2", "1", "2", 1.0),
            link("2-3", "2", "3", 1.0),
        ],
    )
    .expect("fig1 topology is valid");
    let dm = DemandMatrix::from_named(&topo, [("1", "3", 1.0), ("3", "4", 0.9)])
        .expect("fig1 demands are valid");
    (topo, dm)
}

/// Best-effort reconstruction of a small example network: every link has capacity 5 and
/// every demand is 4 units. Not authoritative; several links of the original drawing are
/// unknown, so only its general shape (two sources competing for a shared middle link)
/// is reproduced.
pub fn toy() -> (Topology, DemandMatrix) {
    let topo = Topology::new(
        ["1", "2", "3", "4", "5", "6"],
        [
            link("1", "3", "4", 5.0),
            link("2", "1", "3", 5.0),
            link("3", "5", "3", 5.0),
            link("4", "4", "2", 5.0),
            link("5", "1", "6", 5.0),
            link("6", "6", "2", 5.0),
            link("7", "5", "6", 5.0),
        ],
    )
    .expect("toy topology is valid");
    let dm = DemandMatrix::from_named(&topo, [("1", "2", 4.0), ("5", "2", 4.0)])
        .expect("toy demands are valid");
    (topo, dm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Builtin {
    Fig1,
    Toy,
}

impl Builtin {
    pub fn instance(self) -> (Topology, DemandMatrix) {
        match self {
            Builtin::Fig1 => fig1(),
            Builtin::Toy => toy(),
        }
    }

    pub fn authoritative(self) -> bool {
        matches!(self, Builtin::Fig1)
    }
}
