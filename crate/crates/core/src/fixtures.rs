//! Small hand-built instances used throughout the tests and by the CLI.

use crate::graph::{EdgeId, EdgeSpec, ExchangeGraph, VertexKind};

/// Edge ids of the four-vertex example graph, in the order they are created.
pub const FIG1_E1: EdgeId = 0;
pub const FIG1_E2: EdgeId = 1;
pub const FIG1_E3: EdgeId = 2;
pub const FIG1_E4: EdgeId = 3;
pub const FIG1_E5: EdgeId = 4;

/// One NDD `n` (vertex 0) and pairs 1, 2, 3.
///
/// | edge | arc   | w  | p   |
/// |------|-------|----|-----|
/// | e1   | 1 → 2 | 10 | 0.6 |
/// | e2   | 2 → 1 | 10 | 0.6 |
/// | e3   | 1 → 3 | 3  | 0.1 |
/// | e4   | 3 → 1 | 4  | 0.1 |
/// | e5   | n → 1 | 1  | 0   |
pub fn figure1() -> ExchangeGraph {
    ExchangeGraph::new(
        vec![
            VertexKind::Ndd,
            VertexKind::Pair,
            VertexKind::Pair,
            VertexKind::Pair,
        ],
        vec![
            EdgeSpec::new(1, 2, 10.0, 0.6),
            EdgeSpec::new(2, 1, 10.0, 0.6),
            EdgeSpec::new(1, 3, 3.0, 0.1),
            EdgeSpec::new(3, 1, 4.0, 0.1),
            EdgeSpec::new(0, 1, 1.0, 0.0),
        ],
    )
    .expect("static fixture")
}
