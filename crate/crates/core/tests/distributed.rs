use std::sync::Arc;

use lpsketch::distributed::{coordinate, machine_message, partition, MachineState, PartitionScheme, ProtocolConfig};
use lpsketch::median::MedianSketchConfig;
use lpsketch::stream::{Passthrough, SensitivitySampling, StreamConfig};
use lpsketch::synth::gaussian_blobs;

fn config(n: usize, capacity: usize) -> ProtocolConfig {
    let slot = MedianSketchConfig::new(1.0, 0.5, 0.5, 2).unwrap().with_samples(2, 1).with_widths(8, 8, 8).with_count_min(1, 4);
    let stream = StreamConfig::new(1.0, 0.5, 0.5, 2, 2, capacity, 21).unwrap().with_slot(slot.clone());
    ProtocolConfig { stream, median: slot, n, k: 2, budget: Some(1 << 20) }
}

fn frames(cfg: &ProtocolConfig, pts: &[Vec<f64>], m: usize) -> Vec<(usize, Vec<u8>)> {
    partition(pts.len(), m, PartitionScheme::RoundRobin)
        .unwrap()
        .into_iter()
        .enumerate()
        .map(|(mi, idx)| {
            let machine = MachineState {
                machine_id: mi as u32,
                seed: cfg.seed(),
                points: idx.iter().map(|&i| (i as u64, pts[i].clone())).collect(),
            };
            (mi, machine_message(cfg, &machine, Arc::new(SensitivitySampling)).unwrap())
        })
        .collect()
}

#[test]
fn frame_arrival_order_is_irrelevant() {
    let pts = gaussian_blobs(12, 2, 2, 8.0, 1.0, 3);
    let cfg = config(12, 5);
    let f = frames(&cfg, &pts, 3);
    let mut reversed = f.clone();
    reversed.reverse();
    let a = coordinate(&cfg, 3, f, Arc::new(SensitivitySampling)).unwrap();
    let b = coordinate(&cfg, 3, reversed, Arc::new(SensitivitySampling)).unwrap();
    assert_eq!(a, b);
    assert!(a.within_budget);
    assert!(a.k_cost.coreset_size <= 5);
}

#[test]
fn budget_is_reported() {
    let pts = gaussian_blobs(6, 2, 2, 8.0, 1.0, 4);
    let mut cfg = config(6, 6);
    cfg.budget = Some(10);
    let f = frames(&cfg, &pts, 2);
    let out = coordinate(&cfg, 2, f, Arc::new(Passthrough)).unwrap();
    assert!(!out.within_budget);
    assert!(out.transcript.total > 10);
}

#[test]
fn corrupted_frame_is_rejected() {
    let pts = gaussian_blobs(4, 2, 2, 8.0, 1.0, 5);
    let cfg = config(4, 4);
    let mut f = frames(&cfg, &pts, 2);
    let cut = f[1].1.len() - 3;
    f[1].1.truncate(cut);
    assert!(coordinate(&cfg, 2, f, Arc::new(Passthrough)).is_err());
}
