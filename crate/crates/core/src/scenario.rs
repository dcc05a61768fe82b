//! Static world: grid of edge clouds, links, coverage cells, routes and the
//! service catalogue.

use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, Resources, ScenarioConfig};

pub type EcId = usize;
pub type LinkId = usize;
pub type ServiceId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScenarioError {
    #[error("unknown EC {0}")]
    UnknownNode(EcId),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeCloud {
    pub id: EcId,
    pub grid_pos: (usize, usize),
    pub cores: usize,
    pub capacity: Resources,
    /// Centre of the coverage cell, metres.
    pub center: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Link {
    pub id: LinkId,
    /// Endpoints with `a < b`.
    pub a: EcId,
    pub b: EcId,
    pub service_rate: f64,
    pub proc_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Service {
    pub id: ServiceId,
    pub demand: Resources,
    pub latency_limit: f64,
    pub request_rate_per_user: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Topology {
    pub rows: usize,
    pub cols: usize,
    pub cell_size: f64,
    pub wireless_delay: f64,
    pub ecs: Vec<EdgeCloud>,
    pub links: Vec<Link>,
    pub services: Vec<Service>,
    neighbors: Vec<Vec<(EcId, LinkId)>>,
    hops: Vec<Vec<usize>>,
    /// `routes[a][b]`: link ids from `a` to `b`.
    routes: Vec<Vec<Vec<LinkId>>>,
}

/// Builds the grid world described by `config`.
pub fn build_topology(config: &ScenarioConfig) -> Result<Topology, ConfigError> {
    let g = &config.grid;
    if g.rows == 0 || g.cols == 0 {
        return Err(ConfigError::invalid("grid", "rows and cols must be >= 1"));
    }
    if !(g.cell_size > 0.0) {
        return Err(ConfigError::invalid("grid.cell_size", "must be > 0"));
    }
    if !(config.network.link_service_rate > 0.0) {
        return Err(ConfigError::invalid("network.link_service_rate", "must be > 0"));
    }
    if config.ec.cores == 0 {
        return Err(ConfigError::invalid("ec.cores", "must be >= 1"));
    }
    let services = (0..config.services.count)
        .map(|id| Service {
            id,
            demand: config.services.demand,
            latency_limit: config.t_max,
            request_rate_per_user: config.services.request_rate,
        })
        .collect();
    Ok(Topology::grid(
        g.rows,
        g.cols,
        g.cell_size,
        config.ec.cores,
        config.ec.capacity,
        config.network.link_service_rate,
        config.network.hop_proc_time,
        config.network.wireless_delay,
        services,
    ))
}

impl Topology {
    #[allow(clippy::too_many_arguments)]
    pub fn grid(
        rows: usize,
        cols: usize,
        cell_size: f64,
        cores: usize,
        capacity: Resources,
        link_rate: f64,
        proc_time: f64,
        wireless_delay: f64,
        services: Vec<Service>,
    ) -> Topology {
        let n = rows * cols;
        let ecs: Vec<EdgeCloud> = (0..n)
            .map(|id| {
                let (r, c) = (id / cols, id % cols);
                EdgeCloud {
                    id,
                    grid_pos: (r, c),
                    cores,
                    capacity,
                    center: ((c as f64 + 0.5) * cell_size, (r as f64 + 0.5) * cell_size),
                }
            })
            .collect();

        let mut links = Vec::new();
        let mut neighbors = vec![Vec::new(); n];
        for id in 0..n {
            let (r, c) = (id / cols, id % cols);
            let mut connect = |b: EcId| {
                let lid = links.len();
                links.push(Link {
                    id: lid,
                    a: id,
                    b,
                    service_rate: link_rate,
                    proc_time,
                });
                neighbors[id].push((b, lid));
                neighbors[b].push((id, lid));
            };
            if c + 1 < cols {
                connect(id + 1);
            }
            if r + 1 < rows {
                connect(id + cols);
            }
        }
        for adj in &mut neighbors {
            adj.sort_unstable();
        }

        let hops: Vec<Vec<usize>> = (0..n).map(|s| bfs(&neighbors, s)).collect();
        let mut routes = vec![vec![Vec::new(); n]; n];
        for a in 0..n {
            for b in a + 1..n {
                let path = canonical_path(&neighbors, &hops, a, b);
                let mut rev = path.clone();
                rev.reverse();
                routes[a][b] = path;
                routes[b][a] = rev;
            }
        }

        Topology {
            rows,
            cols,
            cell_size,
            wireless_delay,
            ecs,
            links,
            services,
            neighbors,
            hops,
            routes,
        }
    }

    pub fn num_ecs(&self) -> usize {
        self.ecs.len()
    }

    pub fn num_services(&self) -> usize {
        self.services.len()
    }

    /// Arena extent `(width, height)` in metres.
    pub fn arena(&self) -> (f64, f64) {
        (self.cols as f64 * self.cell_size, self.rows as f64 * self.cell_size)
    }

    /// The EC whose cell contains `(x, y)`. Positions outside the arena are
    /// clamped to the nearest cell, so every position has exactly one owner.
    pub fn locate(&self, x: f64, y: f64) -> EcId {
        let cell = |v: f64, n: usize| -> usize {
            let i = (v / self.cell_size).floor();
            if i.is_nan() || i < 0.0 {
                0
            } else {
                (i as usize).min(n - 1)
            }
        };
        cell(y, self.rows) * self.cols + cell(x, self.cols)
    }

    pub fn neighbors(&self, ec: EcId) -> impl Iterator<Item = EcId> + '_ {
        self.neighbors[ec].iter().map(|&(b, _)| b)
    }

    pub fn hops(&self, a: EcId, b: EcId) -> usize {
        self.hops[a][b]
    }

    pub fn diameter(&self) -> usize {
        self.hops.iter().flatten().copied().max().unwrap_or(0)
    }

    /// Minimum-hop path from `src` to `dst` as link ids.
    pub fn route(&self, src: EcId, dst: EcId) -> Result<&[LinkId], ScenarioError> {
        let n = self.num_ecs();
        if src >= n {
            return Err(ScenarioError::UnknownNode(src));
        }
        if dst >= n {
            return Err(ScenarioError::UnknownNode(dst));
        }
        Ok(&self.routes[src][dst])
    }

    /// Node sequence of [`route`](Self::route), including both endpoints.
    pub fn route_nodes(&self, src: EcId, dst: EcId) -> Result<Vec<EcId>, ScenarioError> {
        let path = self.route(src, dst)?;
        let mut nodes = vec![src];
        let mut at = src;
        for &l in path {
            let link = &self.links[l];
            at = if link.a == at { link.b } else { link.a };
            nodes.push(at);
        }
        Ok(nodes)
    }
}

fn bfs(neighbors: &[Vec<(EcId, LinkId)>], src: EcId) -> Vec<usize> {
    let mut dist = vec![usize::MAX; neighbors.len()];
    let mut queue = std::collections::VecDeque::new();
    dist[src] = 0;
    queue.push_back(src);
    while let Some(u) = queue.pop_front() {
        for &(v, _) in &neighbors[u] {
            if dist[v] == usize::MAX {
                dist[v] = dist[u] + 1;
                queue.push_back(v);
            }
        }
    }
    dist
}

/// Lexicographically smallest node sequence among the shortest paths: walk
/// from `a`, always stepping to the smallest neighbour one hop closer to `b`.
fn canonical_path(
    neighbors: &[Vec<(EcId, LinkId)>],
    hops: &[Vec<usize>],
    a: EcId,
    b: EcId,
) -> Vec<LinkId> {
    let mut path = Vec::with_capacity(hops[a][b]);
    let mut at = a;
    while at != b {
        let &(next, lid) = neighbors[at]
            .iter()
            .find(|&&(v, _)| hops[v][b] + 1 == hops[at][b])
            .expect("grid is connected");
        path.push(lid);
        at = next;
    }
    path
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(rows: usize, cols: usize) -> Topology {
        Topology::grid(rows, cols, 1.0, 1, Resources::new(1, 1), 1000.0, 0.0, 0.0, vec![])
    }

    #[test]
    fn five_by_five_counts() {
        let t = grid(5, 5);
        assert_eq!(t.num_ecs(), 25);
        assert_eq!(t.links.len(), 40);
        assert_eq!(t.neighbors(0).count(), 2);
        assert_eq!(t.neighbors(12).count(), 4);
    }

    #[test]
    fn single_cell_owns_everything() {
        let t = grid(1, 1);
        assert_eq!(t.num_ecs(), 1);
        assert!(t.links.is_empty());
        for &(x, y) in &[(0.0, 0.0), (0.5, 0.99), (-3.0, 7.0), (1.0, 1.0)] {
            assert_eq!(t.locate(x, y), 0);
        }
    }

    #[test]
    fn diagonal_of_two_by_two_is_two_hops() {
        let t = grid(2, 2);
        assert_eq!(t.route(0, 3).unwrap().len(), 2);
        assert_eq!(t.route_nodes(0, 3).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn route_basics() {
        let t = grid(3, 3);
        assert!(t.route(4, 4).unwrap().is_empty());
        assert_eq!(t.route(0, 1).unwrap().len(), 1);
        assert_eq!(t.route(0, 8).unwrap().len(), 4);
        assert_eq!(t.route(0, 9), Err(ScenarioError::UnknownNode(9)));
    }

    #[test]
    fn reverse_route_uses_same_links() {
        let t = grid(4, 3);
        for a in 0..t.num_ecs() {
            for b in 0..t.num_ecs() {
                let mut fwd = t.route(a, b).unwrap().to_vec();
                fwd.reverse();
                assert_eq!(fwd, t.route(b, a).unwrap());
            }
        }
    }

    #[test]
    fn locate_cell_centres() {
        let t = grid(5, 5);
        for ec in &t.ecs {
            assert_eq!(t.locate(ec.center.0, ec.center.1), ec.id);
        }
    }

    #[test]
    fn zero_rows_rejected() {
        let mut cfg = ScenarioConfig::reference();
        cfg.grid.rows = 0;
        assert!(build_topology(&cfg).is_err());
        let mut cfg = ScenarioConfig::reference();
        cfg.network.link_service_rate = 0.0;
        assert!(build_topology(&cfg).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn hop_metric(rows in 1usize..6, cols in 1usize..6, a in 0usize..36, b in 0usize..36, m in 0usize..36) {
                let t = grid(rows, cols);
                let n = t.num_ecs();
                let (a, b, m) = (a % n, b % n, m % n);
                prop_assert_eq!(t.hops(a, b), t.hops(b, a));
                prop_assert!(t.hops(a, b) <= t.hops(a, m) + t.hops(m, b));
                prop_assert_eq!(t.route(a, b).unwrap().len(), t.hops(a, b));
            }

            #[test]
            fn locate_is_total(x in -10.0f64..60.0, y in -10.0f64..60.0) {
                let t = Topology::grid(5, 5, 10.0, 1, Resources::new(1, 1), 1.0, 0.0, 0.0, vec![]);
                prop_assert!(t.locate(x, y) < 25);
            }
        }
    }
}
