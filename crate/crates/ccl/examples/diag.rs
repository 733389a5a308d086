use ccl::contrastive::measure_all;
use ccl::curriculum::{assign_all_difficulties, ScoringMode};
use ccl::harness::{prepare_pools, pretrain_snapshot, ExperimentConfig};

fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].partial_cmp(&v[j]).unwrap());
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let ra = ranks(a);
    let rb = ranks(b);
    let n = a.len() as f64;
    let ma = ra.iter().sum::<f64>() / n;
    let mb = rb.iter().sum::<f64>() / n;
    let mut num = 0.0;
    let mut da = 0.0;
    let mut db = 0.0;
    for i in 0..a.len() {
        num += (ra[i] - ma) * (rb[i] - mb);
        da += (ra[i] - ma).powi(2);
        db += (rb[i] - mb).powi(2);
    }
    num / (da.sqrt() * db.sqrt())
}

fn main() {
    let config = ExperimentConfig::default();
    let seed = 1u64;
    let frozen = pretrain_snapshot(&config, seed).unwrap();
    let pools = prepare_pools(&config, seed).unwrap();
    println!("pools: {} real, {} sim", pools.reals.len(), pools.simulateds.len());

    // Real difficulties and their spread.
    let real_scores = measure_all(&frozen, &pools.reals).unwrap();
    let rv: Vec<f64> = real_scores.scores.iter().map(|s| s.value).collect();
    let mut sorted = rv.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    println!(
        "real difficulty: min {:.4} p25 {:.4} median {:.4} p75 {:.4} max {:.4}",
        sorted[0],
        sorted[sorted.len() / 4],
        sorted[sorted.len() / 2],
        sorted[3 * sorted.len() / 4],
        sorted[sorted.len() - 1]
    );

    // Ground-truth-ish ordering: per-window sigma from the series index.
    // real corpus: 8 series sigma even in [0.05, 1.6]
    let sigma_of = |series_id: &str, n: usize, lo: f64, hi: f64| -> f64 {
        let idx: usize = series_id.rsplit('-').next().unwrap().parse().unwrap();
        lo + (idx as f64 / (n - 1) as f64) * (hi - lo)
    };
    let real_sigma: Vec<f64> = real_scores
        .kept
        .iter()
        .map(|&i| sigma_of(&pools.reals[i].series_id, 8, 0.05, 1.6))
        .collect();
    println!("spearman(real difficulty, sigma) = {:.3}", spearman(&rv, &real_sigma));

    // Simulated: direct measurement vs contrastive transfer.
    let sim_direct = measure_all(&frozen, &pools.simulateds).unwrap();
    let dv: Vec<f64> = sim_direct.scores.iter().map(|s| s.value).collect();
    let sim_sigma: Vec<f64> = sim_direct
        .kept
        .iter()
        .map(|&i| sigma_of(&pools.simulateds[i].series_id, 20, 0.05, 1.6))
        .collect();
    println!("spearman(sim direct difficulty, sigma) = {:.3}", spearman(&dv, &sim_sigma));

    let t0 = std::time::Instant::now();
    let mut transfer = config.transfer.clone();
    transfer.train.seed = 1234;
    let assignment = assign_all_difficulties(
        &frozen,
        &pools.reals,
        &pools.simulateds,
        &transfer,
        ScoringMode::ContrastiveTransfer,
    )
    .unwrap();
    println!("encoder losses: {:?}", assignment.encoder_losses);
    println!("transfer took {:.1}s", t0.elapsed().as_secs_f64());
    let n_real = real_scores.scores.len();
    let tv: Vec<f64> = assignment.dataset.scores[n_real..]
        .iter()
        .map(|s| s.value)
        .collect();
    let sim_sigma_all: Vec<f64> = pools
        .simulateds
        .iter()
        .map(|w| sigma_of(&w.series_id, 20, 0.05, 1.6))
        .collect();
    println!(
        "spearman(sim transferred difficulty, sigma) = {:.3}",
        spearman(&tv, &sim_sigma_all)
    );
    println!(
        "spearman(transferred, direct) = {:.3}",
        spearman(&tv, &dv)
    );
}
