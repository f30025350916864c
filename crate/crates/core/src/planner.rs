//! Corner-detour path planning around axis-aligned obstacles.
//!
//! Obstacles are inflated by the agent radius. The planner returns the
//! straight segment when it is clear, otherwise the shortest route through a
//! visibility graph over the inflated obstacle corners.

use thiserror::Error;

use crate::geometry::{Point, Pose2D, Rect};
use crate::world::WorldState;

/// Clearance added beyond the inflated corners so detour legs never graze an
/// inflated boundary.
const CORNER_MARGIN: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlanError {
    #[error("target ({0:.3}, {1:.3}) lies inside an obstacle")]
    TargetBlocked(f64, f64),
    #[error("start lies inside an obstacle")]
    StartBlocked,
    #[error("point outside world bounds")]
    OutOfBounds,
    #[error("no collision-free path")]
    NoPath,
}

pub fn plan_path(world: &WorldState, from: Pose2D, to: Point) -> Result<Vec<Point>, PlanError> {
    plan_with_radius(&world.obstacles, world.bounds, from.position(), to, world.params.agent_radius)
}

pub fn plan_with_radius(obstacles: &[Rect], bounds: Rect, from: Point, to: Point, radius: f64) -> Result<Vec<Point>, PlanError> {
    if !bounds.contains(from) || !bounds.contains(to) {
        return Err(PlanError::OutOfBounds);
    }
    let inflated: Vec<Rect> = obstacles.iter().map(|r| r.inflate(radius)).collect();
    if inflated.iter().any(|r| r.contains(to)) {
        return Err(PlanError::TargetBlocked(to.x, to.y));
    }
    if inflated.iter().any(|r| r.contains_strict(from)) {
        return Err(PlanError::StartBlocked);
    }
    let clear = |a: Point, b: Point| !inflated.iter().any(|r| r.crosses_interior(a, b));
    if clear(from, to) {
        return Ok(vec![to]);
    }

    // node 0 = start, node 1 = goal, the rest are candidate corners
    let mut nodes = vec![from, to];
    for r in obstacles {
        for c in r.inflate(radius + CORNER_MARGIN).corners() {
            if bounds.contains(c) && !inflated.iter().any(|o| o.contains(c)) {
                nodes.push(c);
            }
        }
    }

    let n = nodes.len();
    let mut dist = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    dist[0] = 0.0;
    loop {
        let mut u = usize::MAX;
        for i in 0..n {
            if !done[i] && dist[i].is_finite() && (u == usize::MAX || dist[i] < dist[u]) {
                u = i;
            }
        }
        if u == usize::MAX || u == 1 {
            break;
        }
        done[u] = true;
        for v in 0..n {
            if done[v] || v == u || !clear(nodes[u], nodes[v]) {
                continue;
            }
            let alt = dist[u] + nodes[u].distance(nodes[v]);
            if alt < dist[v] {
                dist[v] = alt;
                prev[v] = u;
            }
        }
    }
    if !dist[1].is_finite() {
        return Err(PlanError::NoPath);
    }
    let mut path = Vec::new();
    let mut at = 1;
    while at != 0 {
        path.push(nodes[at]);
        at = prev[at];
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bounds() -> Rect {
        Rect::new(Point::new(-10.0, -10.0), Point::new(10.0, 10.0))
    }

    /// Brute-force oracle: dense point sampling along every leg.
    fn collides(obstacles: &[Rect], start: Point, path: &[Point]) -> bool {
        let mut prev = start;
        for &p in path {
            let n = ((prev.distance(p) / 1e-3).ceil() as usize).max(1);
            for k in 0..=n {
                let t = k as f64 / n as f64;
                let q = prev + (p - prev) * t;
                if obstacles.iter().any(|r| r.contains(q)) {
                    return true;
                }
            }
            prev = p;
        }
        false
    }

    #[test]
    fn straight_when_clear() {
        let p = plan_with_radius(&[], bounds(), Point::new(0.0, 0.0), Point::new(5.0, 0.0), 0.3).unwrap();
        assert_eq!(p, vec![Point::new(5.0, 0.0)]);
    }

    #[test]
    fn detours_around_block() {
        let obs = [Rect::new(Point::new(2.0, -1.0), Point::new(3.0, 1.0))];
        let start = Point::new(0.0, 0.0);
        let p = plan_with_radius(&obs, bounds(), start, Point::new(5.0, 0.0), 0.3).unwrap();
        assert!(p.len() > 1);
        assert_eq!(*p.last().unwrap(), Point::new(5.0, 0.0));
        assert!(!collides(&obs, start, &p));
        assert!(!collides(&[obs[0].inflate(0.3)], start, &p));
    }

    #[test]
    fn target_inside_obstacle() {
        let obs = [Rect::new(Point::new(2.0, -1.0), Point::new(3.0, 1.0))];
        let e = plan_with_radius(&obs, bounds(), Point::new(0.0, 0.0), Point::new(2.5, 0.0), 0.3).unwrap_err();
        assert!(matches!(e, PlanError::TargetBlocked(..)));
    }

    #[test]
    fn walled_in_target_has_no_path() {
        let obs = [Rect::new(Point::new(4.0, -10.0), Point::new(4.5, 10.0))];
        let e = plan_with_radius(&obs, bounds(), Point::new(0.0, 0.0), Point::new(8.0, 0.0), 0.3).unwrap_err();
        assert_eq!(e, PlanError::NoPath);
    }

    #[test]
    fn many_random_layouts_never_collide() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let mut planned = 0;
        for _ in 0..200 {
            let obs: Vec<Rect> = (0..4)
                .map(|_| {
                    let x = rng.random_range(-7.0..7.0);
                    let y = rng.random_range(-7.0..7.0);
                    Rect::new(Point::new(x, y), Point::new(x + rng.random_range(0.3..2.5), y + rng.random_range(0.3..2.5)))
                })
                .collect();
            let start = Point::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
            let goal = Point::new(rng.random_range(-9.0..9.0), rng.random_range(-9.0..9.0));
            if let Ok(p) = plan_with_radius(&obs, bounds(), start, goal, 0.3) {
                planned += 1;
                assert!(!collides(&obs, start, &p), "start {start:?} goal {goal:?} path {p:?}");
            }
        }
        assert!(planned > 100);
    }
}
