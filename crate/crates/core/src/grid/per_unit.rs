//! Conversion between per-unit and physical (Ω, A, V) network parameters.

use super::{Branch, Network, Node};

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNode {
    pub id: String,
    pub vmin_v: f64,
    pub vmax_v: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalBranch {
    pub from: String,
    pub to: String,
    pub r_ohm: f64,
    pub x_ohm: f64,
    pub imax_a: f64,
}

/// Network in physical units, line-to-line voltages.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalNetwork {
    pub base_kva: f64,
    pub base_kv: f64,
    pub nodes: Vec<PhysicalNode>,
    pub branches: Vec<PhysicalBranch>,
    pub slack: String,
}

fn z_base(base_kva: f64, base_kv: f64) -> f64 {
    base_kv * base_kv * 1000.0 / base_kva
}

fn i_base(base_kva: f64, base_kv: f64) -> f64 {
    base_kva / (3f64.sqrt() * base_kv)
}

impl Network {
    pub fn to_physical(&self) -> PhysicalNetwork {
        let zb = z_base(self.base_kva, self.base_kv);
        let ib = i_base(self.base_kva, self.base_kv);
        let vb = self.base_kv * 1000.0;
        PhysicalNetwork {
            base_kva: self.base_kva,
            base_kv: self.base_kv,
            nodes: self
                .nodes
                .iter()
                .map(|n| PhysicalNode { id: n.id.clone(), vmin_v: n.vmin * vb, vmax_v: n.vmax * vb })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| PhysicalBranch {
                    from: b.from.clone(),
                    to: b.to.clone(),
                    r_ohm: b.r * zb,
                    x_ohm: b.x * zb,
                    imax_a: b.imax * ib,
                })
                .collect(),
            slack: self.slack.clone(),
        }
    }
}

impl PhysicalNetwork {
    /// Back to per-unit. Transformer links are not part of the physical view.
    pub fn to_per_unit(&self) -> Network {
        let zb = z_base(self.base_kva, self.base_kv);
        let ib = i_base(self.base_kva, self.base_kv);
        let vb = self.base_kv * 1000.0;
        Network {
            base_kva: self.base_kva,
            base_kv: self.base_kv,
            nodes: self
                .nodes
                .iter()
                .map(|n| Node { id: n.id.clone(), vmin: n.vmin_v / vb, vmax: n.vmax_v / vb })
                .collect(),
            branches: self
                .branches
                .iter()
                .map(|b| Branch {
                    from: b.from.clone(),
                    to: b.to.clone(),
                    r: b.r_ohm / zb,
                    x: b.x_ohm / zb,
                    imax: b.imax_a / ib,
                })
                .collect(),
            slack: self.slack.clone(),
            links: Vec::new(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn twenty_kv_base_impedance() {
        let net = Network {
            base_kva: 1000.0,
            base_kv: 20.0,
            nodes: vec![Node { id: "a".into(), vmin: 0.9, vmax: 1.1 }, Node { id: "b".into(), vmin: 0.9, vmax: 1.1 }],
            branches: vec![Branch { from: "a".into(), to: "b".into(), r: 0.01, x: 0.02, imax: 1.0 }],
            slack: "a".into(),
            links: vec![],
        };
        let phys = net.to_physical();
        // Z_base = 20² / 1 MVA = 400 Ω
        assert!((phys.branches[0].r_ohm - 4.0).abs() < 1e-12);
        assert!((phys.branches[0].imax_a - 1000.0 / (3f64.sqrt() * 20.0)).abs() < 1e-9);
        assert!((phys.nodes[0].vmin_v - 18_000.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn round_trip(
            kva in 10.0f64..1e5, kv in 0.2f64..150.0,
            r in 0.0f64..1.0, x in -1.0f64..1.0, imax in 1e-3f64..10.0,
            vmin in 0.5f64..0.99, span in 0.01f64..0.5,
        ) {
            let net = Network {
                base_kva: kva, base_kv: kv,
                nodes: vec![
                    Node { id: "a".into(), vmin, vmax: vmin + span },
                    Node { id: "b".into(), vmin, vmax: vmin + span },
                ],
                branches: vec![Branch { from: "a".into(), to: "b".into(), r, x, imax }],
                slack: "a".into(),
                links: vec![],
            };
            let back = net.to_physical().to_per_unit();
            let (b0, b1) = (&net.branches[0], &back.branches[0]);
            prop_assert!(rel(b1.r, b0.r) <= 1e-12 || b0.r == 0.0 && b1.r == 0.0);
            prop_assert!(rel(b1.x, b0.x) <= 1e-12 || b0.x == 0.0 && b1.x == 0.0);
            prop_assert!(rel(b1.imax, b0.imax) <= 1e-12);
            prop_assert!(rel(back.nodes[0].vmin, vmin) <= 1e-12);
            prop_assert!(rel(back.nodes[1].vmax, vmin + span) <= 1e-12);
        }
    }
}
