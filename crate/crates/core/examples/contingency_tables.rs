//! Per-profile precision, recall and F1 from published contingency counts.
//!
//! The counts are the Q1 KMeans table: six profiles by six fitted clusters.

use akp_audit::agreement::{retrieval_scores, ContingencyTable};

const Q1_KMEANS: [[u64; 6]; 6] = [
    [0, 102, 0, 0, 5, 24],
    [3, 39, 0, 0, 12, 37],
    [3, 22, 0, 0, 13, 65],
    [13, 28, 0, 0, 26, 39],
    [12, 14, 0, 0, 36, 50],
    [31, 5, 3, 16, 55, 16],
];

fn main() -> akp_audit::Result<()> {
    let table = ContingencyTable::from_counts(Q1_KMEANS.iter().map(|r| r.to_vec()).collect())?;
    let scores = retrieval_scores(&table)?;
    let names = table.column_names();

    println!("F1 (best per row starred)");
    println!("     {}", names.iter().map(|n| format!("{n:>6}")).collect::<String>());
    for (p, row) in scores.f1.iter().enumerate() {
        let best = scores.best_per_profile[p].column;
        let cells: String = row
            .iter()
            .enumerate()
            .map(|(c, v)| format!("{:>5.2}{}", v, if c == best { "*" } else { " " }))
            .collect();
        println!("KP{}  {cells}", p + 1);
    }
    Ok(())
}
