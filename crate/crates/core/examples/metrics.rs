//! Scores generated rules against a gold rule and combines per-rule METEOR
//! with retention decisions into WRecall and GREEN.
//!
//! ```bash
//! cargo run --example metrics
//! ```

use deer::metrics::{bleu, green, meteor, wrecall, MeteorParams, ScoredRule};

fn main() {
    let gold = "If a plant grows in poor soil and it catches insects, then it gains nitrogen from them.";
    let generated = [
        "If a plant grows in poor soil and it traps insects, then it gets nitrogen from the insects.",
        "If a plant catches insects, then it lives in a bog.",
        "If a tree is tall, then it is old.",
    ];
    let params = MeteorParams::default();
    for text in generated {
        println!("meteor {:.4}  bleu {:.4}  {text}", meteor(text, gold, &params), bleu(text, &[gold]));
    }

    // Twenty candidates ranked by METEOR; the filter keeps the better half
    // plus one weak rule.
    let pool: Vec<ScoredRule> = (0..20)
        .map(|i| ScoredRule {
            rule_id: format!("c{i}"),
            meteor: 0.6 - 0.025 * i as f64,
            retained: i < 10 || i == 17,
        })
        .collect();
    let w = wrecall(&pool).unwrap();
    println!("block recalls {:?}", w.block_recalls);
    println!("wrecall {:.4}", w.value);

    let mean_meteor = 100.0 * pool.iter().filter(|r| r.retained).map(|r| r.meteor).sum::<f64>()
        / pool.iter().filter(|r| r.retained).count() as f64;
    println!("meteor x100 {mean_meteor:.2}  green {:.4}", green(mean_meteor, w.value));
}
