//! Reference implementations used only by the integration tests.
//!
//! Nothing here calls into the library's solver or entropy code.

#![allow(dead_code)]

use std::collections::HashMap;

use igdebias::corpus::{Dataset, Sample, Task};

/// IG as the mutual information `Σ p(y,b) log2(p(y,b) / (p(y) p(b)))`.
pub fn mutual_information(counts: &[Vec<u64>]) -> f64 {
    let total: u64 = counts.iter().flatten().sum();
    if total == 0 {
        return 0.0;
    }
    let n = total as f64;
    let rows: Vec<f64> = counts.iter().map(|r| r.iter().sum::<u64>() as f64 / n).collect();
    let cols: Vec<f64> = (0..counts[0].len())
        .map(|b| counts.iter().map(|r| r[b]).sum::<u64>() as f64 / n)
        .collect();
    let mut mi = 0.0;
    for (y, row) in counts.iter().enumerate() {
        for (b, &c) in row.iter().enumerate() {
            if c > 0 {
                let p = c as f64 / n;
                mi += p * (p / (rows[y] * cols[b])).log2();
            }
        }
    }
    mi
}

/// Largest within-column spread.
pub fn column_spread(counts: &[Vec<u64>]) -> u64 {
    (0..counts[0].len())
        .map(|b| {
            let col: Vec<u64> = counts.iter().map(|r| r[b]).collect();
            col.iter().max().unwrap() - col.iter().min().unwrap()
        })
        .max()
        .unwrap_or(0)
}

/// Every vector of `len` non-negative integers summing to `total`.
pub fn compositions(total: u64, len: usize) -> Vec<Vec<u64>> {
    if len == 1 {
        return vec![vec![total]];
    }
    let mut out = Vec::new();
    for first in 0..=total {
        for mut rest in compositions(total - first, len - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Every row a single answer class can reach by moving its samples
/// between columns, with the fewest moves that reach it, found by
/// enumerating the raw move amounts `x[b -> b']`.
pub fn reachable_rows_by_flows(row: &[u64]) -> HashMap<Vec<u64>, u64> {
    let cols = row.len();
    let pairs: Vec<(usize, usize)> = (0..cols)
        .flat_map(|b| (0..cols).filter(move |&c| c != b).map(move |c| (b, c)))
        .collect();
    let mut best: HashMap<Vec<u64>, u64> = HashMap::new();
    let mut amounts = vec![0u64; pairs.len()];
    loop {
        let mut out = vec![0u64; cols];
        for (k, &(b, _)) in pairs.iter().enumerate() {
            out[b] += amounts[k];
        }
        if out.iter().zip(row).all(|(o, r)| o <= r) {
            let mut target = row.to_vec();
            for (k, &(b, c)) in pairs.iter().enumerate() {
                target[b] -= amounts[k];
                target[c] += amounts[k];
            }
            let cost: u64 = amounts.iter().sum();
            let e = best.entry(target).or_insert(u64::MAX);
            *e = (*e).min(cost);
        }
        // odometer over amounts[k] in 0..=row[source]
        let mut k = 0;
        loop {
            if k == pairs.len() {
                return best;
            }
            if amounts[k] < row[pairs[k].0] {
                amounts[k] += 1;
                break;
            }
            amounts[k] = 0;
            k += 1;
        }
    }
}

/// Minimum number of moves under independent coupling by enumerating
/// every combination of per-row flow vectors. Exponential; small tables
/// only.
pub fn min_cost_by_flows(counts: &[Vec<u64>], eps: u64) -> Option<u64> {
    let per_row: Vec<Vec<(Vec<u64>, u64)>> = counts
        .iter()
        .map(|r| reachable_rows_by_flows(r).into_iter().collect())
        .collect();
    let mut best: Option<u64> = None;
    let mut pick = vec![0usize; per_row.len()];
    loop {
        let table: Vec<Vec<u64>> = pick.iter().enumerate().map(|(y, &i)| per_row[y][i].0.clone()).collect();
        if column_spread(&table) <= eps {
            let cost: u64 = pick.iter().enumerate().map(|(y, &i)| per_row[y][i].1).sum();
            best = Some(best.map_or(cost, |b| b.min(cost)));
        }
        let mut y = 0;
        loop {
            if y == pick.len() {
                return best;
            }
            pick[y] += 1;
            if pick[y] < per_row[y].len() {
                break;
            }
            pick[y] = 0;
            y += 1;
        }
    }
}

/// Cheapest way to turn `row` into `target` (same total): each unit that
/// leaves a column is one move.
pub fn row_move_cost(row: &[u64], target: &[u64]) -> u64 {
    row.iter().zip(target).map(|(&n, &t)| n.saturating_sub(t)).sum()
}

/// Minimum moves by enumerating every target table that keeps row totals
/// and has column spread at most `eps`.
pub fn min_cost_by_targets(counts: &[Vec<u64>], eps: u64) -> Option<u64> {
    let cols = counts[0].len();
    let options: Vec<Vec<Vec<u64>>> = counts.iter().map(|r| compositions(r.iter().sum(), cols)).collect();
    let mut best: Option<u64> = None;
    let mut pick = vec![0usize; counts.len()];
    loop {
        let table: Vec<Vec<u64>> = pick.iter().enumerate().map(|(y, &i)| options[y][i].clone()).collect();
        if column_spread(&table) <= eps {
            let cost: u64 = counts.iter().zip(&table).map(|(r, t)| row_move_cost(r, t)).sum();
            best = Some(best.map_or(cost, |b| b.min(cost)));
        }
        let mut y = 0;
        loop {
            if y == pick.len() {
                return best;
            }
            pick[y] += 1;
            if pick[y] < options[y].len() {
                break;
            }
            pick[y] = 0;
            y += 1;
        }
    }
}

/// Minimum moves by choosing, per column, the band `[L, L + eps]` every
/// cell of that column must land in. Once the bands are fixed the rows are
/// independent: the closest row to `N` inside the box is the clamp `c`,
/// and matching the row total costs `|Σc - R|` more units of L1 distance.
/// A row's move count is half its L1 distance because totals are kept.
pub fn min_cost_by_bands(counts: &[Vec<u64>], eps: u64) -> Option<u64> {
    struct Search<'a> {
        counts: &'a [Vec<u64>],
        totals: Vec<u64>,
        eps: u64,
        lower: Vec<u64>,
        best: Option<u64>,
    }

    impl Search<'_> {
        fn rec(&mut self, b: usize, partial: u64) {
            let cols = self.lower.len();
            if b == cols {
                let mut total_cost = 0;
                for (row, &r) in self.counts.iter().zip(&self.totals) {
                    let mut dist = 0;
                    let mut sum = 0;
                    for (&n, &l) in row.iter().zip(&self.lower) {
                        let v = n.clamp(l, l + self.eps);
                        dist += n.abs_diff(v);
                        sum += v;
                    }
                    dist += sum.abs_diff(r);
                    total_cost += dist / 2;
                }
                self.best = Some(self.best.map_or(total_cost, |x| x.min(total_cost)));
                return;
            }
            // Σ lower ≤ min row total and Σ (lower + eps) ≥ max row total
            let min_r = *self.totals.iter().min().unwrap();
            let max_r = *self.totals.iter().max().unwrap();
            let hi = min_r.saturating_sub(partial);
            let lo = if b + 1 == cols {
                max_r.saturating_sub(partial + self.eps * cols as u64)
            } else {
                0
            };
            for l in lo..=hi {
                self.lower[b] = l;
                self.rec(b + 1, partial + l);
            }
        }
    }

    let mut search = Search {
        counts,
        totals: counts.iter().map(|r| r.iter().sum()).collect(),
        eps,
        lower: vec![0; counts[0].len()],
        best: None,
    };
    search.rec(0, 0);
    search.best
}

/// Coupled features: only the column totals matter and a move shifts one
/// sample between two columns, so the cost is the smallest total excess
/// over targets whose spread is at most `eps`. `None` when no split of the
/// total is that even.
pub fn min_cost_coupled(col_totals: &[u64], eps: u64) -> Option<u64> {
    let total: u64 = col_totals.iter().sum();
    compositions(total, col_totals.len())
        .into_iter()
        .filter(|t| t.iter().max().unwrap() - t.iter().min().unwrap() <= eps)
        .map(|t| row_move_cost(col_totals, &t))
        .min()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

/// Every `rows x cols` table with cells in `0..=max_cell`, one
/// representative per orbit under row and column permutations (the one
/// whose row-major flattening is lexicographically smallest).
pub fn canonical_tables(rows: usize, cols: usize, max_cell: u64) -> Vec<Vec<Vec<u64>>> {
    let mut all_rows: Vec<Vec<u64>> = vec![Vec::new()];
    for _ in 0..cols {
        all_rows = all_rows
            .into_iter()
            .flat_map(|r| {
                (0..=max_cell).map(move |v| {
                    let mut r = r.clone();
                    r.push(v);
                    r
                })
            })
            .collect();
    }
    let col_perms = permutations(cols);
    let mut out = Vec::new();
    let mut idx = vec![0usize; rows];
    // rows chosen as a non-decreasing index sequence, i.e. sorted rows
    'outer: loop {
        let table: Vec<Vec<u64>> = idx.iter().map(|&i| all_rows[i].clone()).collect();
        let is_canonical = col_perms.iter().all(|p| {
            let mut permuted: Vec<Vec<u64>> = table.iter().map(|r| p.iter().map(|&c| r[c]).collect()).collect();
            permuted.sort();
            table <= permuted
        });
        if is_canonical {
            out.push(table);
        }
        let mut k = rows;
        loop {
            if k == 0 {
                break 'outer;
            }
            k -= 1;
            if idx[k] + 1 < all_rows.len() {
                idx[k] += 1;
                for j in k + 1..rows {
                    idx[j] = idx[k];
                }
                break;
            }
        }
    }
    out
}

/// Binary-label sentiment samples laid out as `counts[label][negation]`.
pub fn sentiment_dataset(counts: [[usize; 2]; 2]) -> Dataset {
    let texts = [
        ["a bright and moving story", "it is not bad at all"],
        ["a dull and tired story", "it is not good at all"],
    ];
    let mut samples = Vec::new();
    for (y, label) in ["positive", "negative"].iter().enumerate() {
        for (b, value) in ["absent", "present"].iter().enumerate() {
            for i in 0..counts[y][b] {
                samples.push(Sample::new(
                    format!("sa-{label}-{value}-{i:04}"),
                    Task::Sa,
                    format!("{} ({i})", texts[y][b]),
                    *label,
                ));
            }
        }
    }
    Dataset::new(samples).unwrap()
}

/// QA samples whose answers are `high` well-known and `low` obscure names.
pub fn qa_samples(high: usize, low: usize) -> Vec<Sample> {
    let popular = ["Barack Obama", "Taylor Swift", "Albert Einstein", "Lionel Messi"];
    let obscure = ["Piero Landi", "Harold Tenney", "Elsbeth Marr", "Tomas Brandl"];
    let mut out = Vec::new();
    for i in 0..high {
        out.push(Sample::new(
            format!("qa-high-{i:04}"),
            Task::Qa,
            format!("Question: Who signed guest book {i}?"),
            popular[i % popular.len()],
        ));
    }
    for i in 0..low {
        out.push(Sample::new(
            format!("qa-low-{i:04}"),
            Task::Qa,
            format!("Question: Who signed ledger {i}?"),
            obscure[i % obscure.len()],
        ));
    }
    out
}

/// NLI samples with `counts[label][bin]` over entailment/neutral/
/// contradiction and low/medium/high overlap.
pub fn nli_samples(counts: [[usize; 3]; 3]) -> Vec<Sample> {
    let premise = "the tall doctor paid the young actor near the old station";
    let hypotheses = [
        "the visitor waved at a small dog",
        "the doctor paid a small dog",
        "the tall doctor paid the young actor",
    ];
    let mut out = Vec::new();
    for (y, label) in ["entailment", "neutral", "contradiction"].iter().enumerate() {
        for (b, bin) in ["low", "medium", "high"].iter().enumerate() {
            for i in 0..counts[y][b] {
                out.push(Sample::new(
                    format!("nli-{label}-{bin}-{i:04}"),
                    Task::Nli,
                    format!("Sentence 1: {premise} {i}. Sentence 2: {}", hypotheses[b]),
                    *label,
                ));
            }
        }
    }
    out
}
