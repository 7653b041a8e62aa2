// Probe: desk-scale retrieval quality across net/pool/data variants.
use lfd::dataset::{gen_procedural_dataset, DatasetSpec};
use lfd::degrade::{degrade, DegradeConfig};
use lfd::geom::Camera;
use lfd::grad::TrainSample;
use lfd::mesh::Mesh;
use lfd::metrics::top_k_accuracy;
use lfd::net::NetConfig;
use lfd::render::{render_location_field, sample_pose, PoseConfig};
use lfd::retrieval::{build_center_bank, retrieve, RetrievalResult};
use lfd::train::{train, TrainConfig};
use lfd::util::fnv1a;

const SEED: u64 = 20240913;

fn seed_for(tag: &str, id: &str, v: u32) -> u64 {
    SEED ^ fnv1a(format!("{id}/{tag}/{v}").as_bytes())
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let pool: u32 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(4);
    let deg_views: u32 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(20);
    let h1: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(512);
    let h2: usize = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(256);
    let deg_rounds: u32 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(1);
    let aggressive: bool = args.get(6).map(|s| s == "aggr").unwrap_or(false);

    let spec = DatasetSpec::mixed(40, 0.02);
    let all = gen_procedural_dataset(&spec, SEED).unwrap();
    let mut seen: Vec<Mesh> = Vec::new();
    for (i, mesh) in all.into_iter().enumerate() {
        if i % 4 != 3 { seen.push(mesh); }
    }
    seen.sort_by(|a, b| a.model_id.cmp(&b.model_id));
    let ids: Vec<String> = seen.iter().map(|m| m.model_id.clone()).collect();
    let res = 56u32;
    let cam = Camera::centered(res as f64, res, res);
    let pose_cfg = PoseConfig::default();
    let deg_cfg = DegradeConfig::default();
    let train_deg_cfg = if aggressive {
        DegradeConfig {
            blur_prob: 1.0,
            blur_sigma: [0.5, 2.5],
            noise_prob: 1.0,
            noise_sigma: [0.005, 0.05],
            morph_prob: 0.7,
            morph_radius: [1, 3],
            thin_dropout_prob: 0.5,
        }
    } else {
        deg_cfg
    };

    let mut dataset = Vec::new();
    for (label, mesh) in seen.iter().enumerate() {
        for v in 0..60u32 {
            let pose = sample_pose(&pose_cfg, &cam, seed_for("train", &mesh.model_id, v));
            let lf = render_location_field(mesh, &pose, &cam, res, res).unwrap();
            for round in 0..deg_rounds {
                if v < deg_views {
                    let deg = degrade(
                        &lf,
                        &train_deg_cfg,
                        seed_for("deg", &mesh.model_id, v + 60 * round),
                    )
                    .unwrap();
                    dataset.push(TrainSample::predicted(deg, label, lf.clone()));
                }
            }
            dataset.push(TrainSample::rendered(lf, label));
        }
    }
    let net_cfg = NetConfig {
        input_width: res, input_height: res, pool,
        hidden: vec![h1, h2], dim: 270, num_models: seen.len(),
        alpha: 0.01, beta: 0.1, delta: 0.01, margin: 1.0, huber_t: 1.0,
        mean_normalize: false, seed: SEED,
    };
    let train_cfg = TrainConfig {
        epochs: 120, batch_size: 32, lr: 1e-3,
        decay_epochs: vec![60, 100], decay_factor: 5.0, momentum: 0.9,
        ratio: (1, 3), seed: SEED,
    };
    let t = std::time::Instant::now();
    let (net, curve) = train(&dataset, net_cfg, &train_cfg).unwrap();
    let bank = build_center_bank(&net, ids).unwrap();

    let mut clean: Vec<(RetrievalResult, String)> = Vec::new();
    let mut degq: Vec<(RetrievalResult, String)> = Vec::new();
    for mesh in &seen {
        for v in 0..8u32 {
            let pose = sample_pose(&pose_cfg, &cam, seed_for("held", &mesh.model_id, v));
            let lf = render_location_field(mesh, &pose, &cam, res, res).unwrap();
            clean.push((retrieve(&net, &lf, &bank, bank.len()).unwrap(), mesh.model_id.clone()));
            let dg = degrade(&lf, &deg_cfg, seed_for("helddeg", &mesh.model_id, v)).unwrap();
            degq.push((retrieve(&net, &dg, &bank, bank.len()).unwrap(), mesh.model_id.clone()));
        }
    }
    println!(
        "pool={pool} deg_views={deg_views}x{deg_rounds} aggr={aggressive} hidden=[{h1},{h2}]: clean_top1={:.3} deg_top1={:.3} deg_top10={:.3} (train {:.0}s, final loss {:.3})",
        top_k_accuracy(&clean, 1).unwrap(),
        top_k_accuracy(&degq, 1).unwrap(),
        top_k_accuracy(&degq, 10).unwrap(),
        t.elapsed().as_secs_f64(),
        curve.last().unwrap().total,
    );

    // Diagnostics: confusion pairs and cluster geometry.
    let mut confusions: std::collections::BTreeMap<(String, String), usize> = Default::default();
    for (res, gt) in &clean {
        let top = &res.ranked[0].model_id;
        if top != gt {
            *confusions.entry((gt.clone(), top.clone())).or_default() += 1;
        }
    }
    for ((gt, top), count) in &confusions {
        println!("  clean miss: {gt} -> {top} x{count}");
    }
    // Margin stats on clean held-out queries: distance to own center vs
    // nearest other center.
    let mut own_sum = 0.0;
    let mut other_sum = 0.0;
    let mut n = 0.0;
    for (res, gt) in &clean {
        let own = res.ranked.iter().find(|r| &r.model_id == gt).unwrap().distance;
        let other = res
            .ranked
            .iter()
            .filter(|r| &r.model_id != gt)
            .map(|r| r.distance)
            .fold(f64::INFINITY, f64::min);
        own_sum += own;
        other_sum += other;
        n += 1.0;
    }
    println!(
        "  clean query geometry: mean dist to own center {:.3}, to nearest other {:.3}",
        own_sum / n,
        other_sum / n
    );
}
