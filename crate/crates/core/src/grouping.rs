//! Correlation-driven K-means user grouping.
//!
//! Users are clustered around representatives by normalized channel
//! correlation; each cluster's representative is then re-chosen as the
//! member least correlated with users of the other clusters. The loop stops
//! when the representative set no longer changes.

use rand::Rng;

use crate::channel::{correlation_matrix, ChannelSet};
use crate::config::SystemConfig;
use crate::error::Result;

/// A partition of the users into `M` non-empty groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    /// Ascending user ids per group.
    pub groups: Vec<Vec<usize>>,
    pub representatives: Vec<usize>,
    /// False when the iteration cap stopped the loop.
    pub converged: bool,
}

impl Grouping {
    /// Builds a grouping from explicit groups; the first member of each
    /// group becomes its representative.
    pub fn from_groups(groups: Vec<Vec<usize>>) -> Self {
        let representatives = groups.iter().map(|g| g[0]).collect();
        Self {
            groups,
            representatives,
            converged: true,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.groups.len()
    }

    pub fn n_users(&self) -> usize {
        self.groups.iter().map(Vec::len).sum()
    }

    /// Group index of every user.
    pub fn membership(&self) -> Vec<usize> {
        let mut of = vec![usize::MAX; self.n_users()];
        for (m, g) in self.groups.iter().enumerate() {
            for &k in g {
                of[k] = m;
            }
        }
        of
    }

    pub fn group_of(&self, k: usize) -> Option<usize> {
        self.groups.iter().position(|g| g.contains(&k))
    }

    /// True when groups are disjoint, non-empty, cover `0..n_users` and each
    /// representative belongs to its group.
    pub fn is_valid_partition(&self, n_users: usize) -> bool {
        let mut seen = vec![false; n_users];
        for g in &self.groups {
            if g.is_empty() {
                return false;
            }
            for &k in g {
                if k >= n_users || seen[k] {
                    return false;
                }
                seen[k] = true;
            }
        }
        seen.iter().all(|s| *s)
            && self.representatives.len() == self.groups.len()
            && self
                .representatives
                .iter()
                .zip(&self.groups)
                .all(|(r, g)| g.contains(r))
    }

    /// Writes `user_id,group_id,is_representative` rows.
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["user_id", "group_id", "is_representative"])?;
        let of = self.membership();
        for (k, m) in of.iter().enumerate() {
            let rep = self.representatives[*m] == k;
            w.write_record([k.to_string(), m.to_string(), rep.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Index of the representative most correlated with user `k`; ties go to
/// the lowest group index.
pub fn assign_user(k: usize, reps: &[usize], corr: &[Vec<f64>]) -> usize {
    let mut best = 0;
    for m in 1..reps.len() {
        if corr[k][reps[m]] > corr[k][reps[best]] {
            best = m;
        }
    }
    best
}

/// Sum of `corr[k][j]` over users `j` outside `k`'s group.
pub fn outgroup_correlation(k: usize, grouping: &Grouping, corr: &[Vec<f64>]) -> f64 {
    let of = grouping.membership();
    outgroup_with_membership(k, &of, corr)
}

fn outgroup_with_membership(k: usize, of: &[usize], corr: &[Vec<f64>]) -> f64 {
    (0..of.len())
        .filter(|&j| of[j] != of[k])
        .map(|j| corr[k][j])
        .sum()
}

/// Member of group `m` with the smallest out-group correlation; ties go to
/// the lowest user id.
pub fn update_representative(m: usize, grouping: &Grouping, corr: &[Vec<f64>]) -> usize {
    let of = grouping.membership();
    best_representative(&grouping.groups[m], &of, corr)
}

fn best_representative(group: &[usize], of: &[usize], corr: &[Vec<f64>]) -> usize {
    let mut best = (usize::MAX, f64::INFINITY);
    for &k in group {
        let c = outgroup_with_membership(k, of, corr);
        if c < best.1 || (c == best.1 && k < best.0) {
            best = (k, c);
        }
    }
    best.0
}

fn assign_all(reps: &[usize], corr: &[Vec<f64>]) -> Vec<Vec<usize>> {
    let mut groups: Vec<Vec<usize>> = reps.iter().map(|&r| vec![r]).collect();
    for k in 0..corr.len() {
        if reps.contains(&k) {
            continue;
        }
        groups[assign_user(k, reps, corr)].push(k);
    }
    for g in &mut groups {
        g.sort_unstable();
    }
    groups
}

/// Runs the grouping loop from explicit initial representatives.
pub fn group_from_representatives(
    corr: &[Vec<f64>],
    initial: &[usize],
    max_iterations: usize,
) -> Grouping {
    let mut reps = initial.to_vec();
    let mut iterations = 0;
    loop {
        let groups = assign_all(&reps, corr);
        let mut of = vec![0; corr.len()];
        for (m, g) in groups.iter().enumerate() {
            for &k in g {
                of[k] = m;
            }
        }
        let next: Vec<usize> = groups
            .iter()
            .map(|g| best_representative(g, &of, corr))
            .collect();
        iterations += 1;

        let mut a = reps.clone();
        let mut b = next.clone();
        a.sort_unstable();
        b.sort_unstable();
        let converged = a == b;
        if converged || iterations >= max_iterations {
            if !converged {
                log::warn!("user grouping hit the {max_iterations}-iteration cap");
            }
            return Grouping {
                groups,
                representatives: next,
                converged,
            };
        }
        reps = next;
    }
}

/// Groups the users of `channels` into `config.n_rf_chains` clusters,
/// starting from representatives sampled without replacement.
pub fn group_users<R: Rng + ?Sized>(
    channels: &ChannelSet,
    config: &SystemConfig,
    rng: &mut R,
) -> Result<Grouping> {
    let corr = correlation_matrix(channels)?;
    let k = channels.n_users();
    let m = config.n_rf_chains.min(k);
    let initial = rand::seq::index::sample(rng, k, m).into_vec();
    Ok(group_from_representatives(
        &corr,
        &initial,
        config.max_grouping_iterations,
    ))
}
