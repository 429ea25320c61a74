//! Search for coarse bands of adjacent-quality profiles that a clustering retrieves
//! better than the individual profiles.

use akp_audit::agreement::{grouped_profile_search, score_grouping, ContingencyTable, GroupingMode};
use akp_audit::ProfileOrdering;

const Q1_HDBSCAN: [[u64; 4]; 6] = [
    [19, 0, 112, 0],
    [29, 0, 62, 0],
    [36, 0, 67, 0],
    [49, 0, 57, 0],
    [61, 0, 51, 0],
    [71, 7, 43, 5],
];

fn main() -> akp_audit::Result<()> {
    let table = ContingencyTable::from_counts(Q1_HDBSCAN.iter().map(|r| r.to_vec()).collect())?;

    let fixed = score_grouping(&table, &[vec![1, 2, 3, 4], vec![5, 6]])?;
    for band in &fixed {
        println!("{:?}: F1 {:.3} against column {}", band.profiles, band.best.f1, band.best.column);
    }

    let ordering = ProfileOrdering::identity(table.k());
    for mode in [GroupingMode::Contiguous, GroupingMode::Exhaustive] {
        let result = grouped_profile_search(&table, &ordering, 2, mode)?;
        let best = result.best_grouping();
        println!(
            "{mode:?}: {} candidates, best {:?} with mean F1 {:.3}",
            result.candidates.len(),
            best.bands,
            best.mean_f1
        );
    }
    Ok(())
}
