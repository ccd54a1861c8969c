use crate::pareto::dominates;

use super::Individual;

/// Deb's feasibility rule: a feasible individual beats an infeasible one,
/// the smaller total violation wins among infeasible ones, and Pareto
/// dominance decides among feasible ones.
pub fn constrained_dominates(a: &Individual, b: &Individual) -> bool {
    match (a.is_feasible(), b.is_feasible()) {
        (true, false) => true,
        (false, true) => false,
        (false, false) => a.violation < b.violation,
        (true, true) => dominates(&a.objectives, &b.objectives),
    }
}

/// Partitions the population into fronts of constrained non-domination,
/// returned as index lists (front 0 first, indices ascending in each front).
pub fn fast_non_dominated_sort(population: &[Individual]) -> Vec<Vec<usize>> {
    let n = population.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut counts = vec![0usize; n];
    for i in 0..n {
        for j in (i + 1)..n {
            if constrained_dominates(&population[i], &population[j]) {
                dominated_by[i].push(j);
                counts[j] += 1;
            } else if constrained_dominates(&population[j], &population[i]) {
                dominated_by[j].push(i);
                counts[i] += 1;
            }
        }
    }

    let mut fronts = Vec::new();
    let mut current: Vec<usize> = (0..n).filter(|&i| counts[i] == 0).collect();
    while !current.is_empty() {
        let mut next = Vec::new();
        for &i in &current {
            for &j in &dominated_by[i] {
                counts[j] -= 1;
                if counts[j] == 0 {
                    next.push(j);
                }
            }
        }
        next.sort_unstable();
        fronts.push(current);
        current = next;
    }
    fronts
}

/// Crowding distance of each member of one front. Boundary members of every
/// objective get `+inf`; an objective with zero range contributes nothing,
/// not even boundary markers.
pub fn crowding_distance(front: &[&[f64]]) -> Vec<f64> {
    let n = front.len();
    if n <= 2 {
        return vec![f64::INFINITY; n];
    }
    let k = front[0].len();
    let mut distance = vec![0.0; n];
    let mut order: Vec<usize> = (0..n).collect();
    for m in 0..k {
        order.sort_by(|&a, &b| front[a][m].total_cmp(&front[b][m]).then(a.cmp(&b)));
        let range = front[order[n - 1]][m] - front[order[0]][m];
        if !(range > 0.0 && range.is_finite()) {
            continue;
        }
        distance[order[0]] = f64::INFINITY;
        distance[order[n - 1]] = f64::INFINITY;
        for w in 1..n - 1 {
            let i = order[w];
            if distance[i].is_finite() {
                distance[i] += (front[order[w + 1]][m] - front[order[w - 1]][m]) / range;
            }
        }
    }
    distance
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ind(objectives: &[f64], violation: f64) -> Individual {
        Individual::new(vec![0.0], objectives.to_vec(), violation)
    }

    #[test]
    fn dominance_examples() {
        assert!(constrained_dominates(&ind(&[9.0, 9.0], 0.0), &ind(&[0.0, 0.0], 0.5)));
        assert!(constrained_dominates(&ind(&[9.0, 9.0], 0.5), &ind(&[0.0, 0.0], 1.0)));
        assert!(!constrained_dominates(&ind(&[0.0, 0.0], 1.0), &ind(&[9.0, 9.0], 0.5)));
        assert!(constrained_dominates(&ind(&[1.0, 2.0], 0.0), &ind(&[2.0, 2.0], 0.0)));
        assert!(!constrained_dominates(&ind(&[1.0, 2.0], 0.0), &ind(&[2.0, 1.0], 0.0)));
        let a = ind(&[1.0, 1.0], 0.0);
        assert!(!constrained_dominates(&a, &a));
    }

    #[test]
    fn sort_examples() {
        assert_eq!(fast_non_dominated_sort(&[]), Vec::<Vec<usize>>::new());
        assert_eq!(fast_non_dominated_sort(&[ind(&[1.0], 0.0)]), vec![vec![0]]);
        let pop = [ind(&[1.0, 2.0], 0.0), ind(&[2.0, 1.0], 0.0), ind(&[2.0, 2.0], 0.0)];
        assert_eq!(fast_non_dominated_sort(&pop), vec![vec![0, 1], vec![2]]);
    }

    #[test]
    fn crowding_examples() {
        let two: [&[f64]; 2] = [&[0.0, 1.0], &[1.0, 0.0]];
        assert_eq!(crowding_distance(&two), vec![f64::INFINITY; 2]);
        let three: [&[f64]; 3] = [&[0.0, 2.0], &[1.0, 1.0], &[2.0, 0.0]];
        let d = crowding_distance(&three);
        assert_eq!(d[1], 2.0);
        assert!(d[0].is_infinite() && d[2].is_infinite());
        // constant second objective adds nothing
        let flat: [&[f64]; 4] = [&[0.0, 5.0], &[1.0, 5.0], &[3.0, 5.0], &[4.0, 5.0]];
        let d = crowding_distance(&flat);
        assert_eq!(d[1], 0.75);
        assert_eq!(d[2], 0.75);
    }
}
