//! Primal network simplex for the dense transportation problem.
//!
//! Supplies and demands are integers so that degenerate pivots compare
//! exactly. The spanning tree is kept strongly feasible (leaving-arc rule of
//! Cunningham), which rules out cycling. Entering arcs are chosen by block
//! search over the implicit `m x n` arc set plus one artificial arc per node.

use crate::error::{Error, Result};

pub(crate) struct SimplexSolution {
    /// `(source, target, units)` for every positive real flow.
    pub flows: Vec<(usize, usize, i64)>,
    /// Dual potentials with `alpha_i + beta_j <= c_ij`, tight on the support.
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub pivots: usize,
}

struct Tree {
    parent: Vec<usize>,
    pred: Vec<usize>,
    depth: Vec<usize>,
    pi: Vec<f64>,
    adj: Vec<Vec<usize>>,
}

const NONE: usize = usize::MAX;

pub(crate) fn network_simplex(
    supply: &[i64],
    demand: &[i64],
    cost: &[f64],
) -> Result<SimplexSolution> {
    let (m, n) = (supply.len(), demand.len());
    debug_assert_eq!(cost.len(), m * n);
    if supply.iter().sum::<i64>() != demand.iter().sum::<i64>() {
        return Err(Error::InvalidArgument(
            "integer supplies and demands differ".into(),
        ));
    }
    let real = m * n;
    let nodes = m + n;
    let root = nodes;
    let arcs = real + nodes;
    let max_cost = cost.iter().fold(0.0f64, |a, &c| a.max(c.abs()));
    let art_cost = (max_cost + 1.0) * (nodes + 1) as f64;
    let eps = 1e-12 * art_cost;

    // artificial arc of node v points to the root unless v has positive demand
    let art_to_root: Vec<bool> = (0..nodes).map(|v| v < m || demand[v - m] == 0).collect();
    let ends = |a: usize| -> (usize, usize) {
        if a < real {
            (a / n, m + a % n)
        } else {
            let v = a - real;
            if art_to_root[v] {
                (v, root)
            } else {
                (root, v)
            }
        }
    };
    let arc_cost = |a: usize| if a < real { cost[a] } else { art_cost };

    let mut flow = vec![0i64; arcs];
    let mut in_tree = vec![false; arcs];
    let mut tree = Tree {
        parent: vec![NONE; nodes + 1],
        pred: vec![NONE; nodes + 1],
        depth: vec![0; nodes + 1],
        pi: vec![0.0; nodes + 1],
        adj: vec![Vec::new(); nodes + 1],
    };
    for v in 0..nodes {
        let a = real + v;
        in_tree[a] = true;
        tree.parent[v] = root;
        tree.pred[v] = a;
        tree.depth[v] = 1;
        tree.adj[v].push(a);
        tree.adj[root].push(a);
        if art_to_root[v] {
            flow[a] = if v < m { supply[v] } else { 0 };
            tree.pi[v] = -art_cost;
        } else {
            flow[a] = demand[v - m];
            tree.pi[v] = art_cost;
        }
    }

    let block = ((arcs as f64).sqrt() as usize).max(10);
    let mut next_arc = 0usize;
    let mut pivots = 0usize;
    let mut up_u: Vec<usize> = Vec::new();
    let mut up_v: Vec<usize> = Vec::new();
    let mut queue: Vec<usize> = Vec::new();

    loop {
        // block search pricing
        let mut best = NONE;
        let mut best_rc = -eps;
        let mut scanned = 0usize;
        let mut in_block = 0usize;
        let mut a = next_arc;
        while scanned < arcs {
            if !in_tree[a] {
                let (s, t) = ends(a);
                let rc = arc_cost(a) + tree.pi[s] - tree.pi[t];
                if rc < best_rc {
                    best_rc = rc;
                    best = a;
                }
            }
            a += 1;
            if a == arcs {
                a = 0;
            }
            scanned += 1;
            in_block += 1;
            if in_block == block {
                if best != NONE {
                    break;
                }
                in_block = 0;
            }
        }
        if best == NONE {
            break;
        }
        next_arc = a;
        let entering = best;
        let (u, v) = ends(entering);

        // join node
        let (mut x, mut y) = (u, v);
        up_u.clear();
        up_v.clear();
        while x != y {
            if tree.depth[x] >= tree.depth[y] {
                up_u.push(x);
                x = tree.parent[x];
            } else {
                up_v.push(y);
                y = tree.parent[y];
            }
        }
        // leaving arc: last blocking arc in cycle order join -> u -> v -> join
        let mut delta = i64::MAX;
        let mut leave_node = NONE;
        let mut leave_on_u_side = false;
        for &w in up_u.iter() {
            // traversed parent -> w; decreasing when the arc points w -> parent
            let e = tree.pred[w];
            if ends(e).0 == w && flow[e] < delta {
                delta = flow[e];
                leave_node = w;
                leave_on_u_side = true;
            }
        }
        for &w in up_v.iter() {
            // traversed w -> parent; decreasing when the arc points parent -> w
            let e = tree.pred[w];
            if ends(e).1 == w && flow[e] <= delta {
                delta = flow[e];
                leave_node = w;
                leave_on_u_side = false;
            }
        }
        if leave_node == NONE {
            return Err(Error::InvalidArgument(
                "unbounded transportation problem".into(),
            ));
        }
        if delta > 0 {
            flow[entering] += delta;
            for &w in &up_u {
                let e = tree.pred[w];
                if ends(e).0 == w {
                    flow[e] -= delta;
                } else {
                    flow[e] += delta;
                }
            }
            for &w in &up_v {
                let e = tree.pred[w];
                if ends(e).1 == w {
                    flow[e] -= delta;
                } else {
                    flow[e] += delta;
                }
            }
        }

        // swap arcs in the tree and re-hang the detached subtree
        let leaving = tree.pred[leave_node];
        let (p0, p1) = ends(leaving);
        tree.adj[p0].retain(|&e| e != leaving);
        tree.adj[p1].retain(|&e| e != leaving);
        in_tree[leaving] = false;
        in_tree[entering] = true;
        tree.adj[u].push(entering);
        tree.adj[v].push(entering);
        let (new_root, anchor) = if leave_on_u_side { (u, v) } else { (v, u) };
        tree.parent[new_root] = anchor;
        tree.pred[new_root] = entering;
        queue.clear();
        queue.push(new_root);
        let mut head = 0;
        while head < queue.len() {
            let w = queue[head];
            head += 1;
            let pw = tree.parent[w];
            let e = tree.pred[w];
            tree.depth[w] = tree.depth[pw] + 1;
            let (s, _) = ends(e);
            tree.pi[w] = if s == w {
                tree.pi[pw] - arc_cost(e)
            } else {
                tree.pi[pw] + arc_cost(e)
            };
            for k in 0..tree.adj[w].len() {
                let f = tree.adj[w][k];
                if f == e {
                    continue;
                }
                let (s, t) = ends(f);
                let other = if s == w { t } else { s };
                tree.parent[other] = w;
                tree.pred[other] = f;
                queue.push(other);
            }
        }
        pivots += 1;
    }

    if (real..arcs).any(|a| flow[a] != 0) {
        return Err(Error::InvalidArgument(
            "transportation problem is infeasible".into(),
        ));
    }
    let mut flows = Vec::new();
    for i in 0..m {
        for j in 0..n {
            let f = flow[i * n + j];
            if f > 0 {
                flows.push((i, j, f));
            }
        }
    }
    let alpha = (0..m).map(|i| -tree.pi[i]).collect();
    let beta = (0..n).map(|j| tree.pi[m + j]).collect();
    Ok(SimplexSolution {
        flows,
        alpha,
        beta,
        pivots,
    })
}

/// Integer masses summing to `total`, by largest-remainder rounding.
pub(crate) fn quantize(weights: &[f64], total: i64) -> Vec<i64> {
    let sum: f64 = weights.iter().sum();
    let scaled: Vec<f64> = weights.iter().map(|w| w / sum * total as f64).collect();
    let mut q: Vec<i64> = scaled.iter().map(|s| s.floor() as i64).collect();
    let mut left = total - q.iter().sum::<i64>();
    let mut order: Vec<usize> = (0..weights.len()).filter(|&i| weights[i] > 0.0).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (scaled[a] - scaled[a].floor(), scaled[b] - scaled[b].floor());
        rb.partial_cmp(&ra).unwrap().then(a.cmp(&b))
    });
    let mut k = 0;
    while left > 0 && !order.is_empty() {
        q[order[k % order.len()]] += 1;
        left -= 1;
        k += 1;
    }
    while left < 0 {
        let i = (0..q.len()).max_by_key(|&i| q[i]).unwrap();
        q[i] -= 1;
        left += 1;
    }
    q
}
