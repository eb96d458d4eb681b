use std::fmt;

use crate::action::Point;

/// Screen-space direction of finger motion (y grows downward).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Direction {
    Up,
    Down,
    Left,
    Right,
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Up => "up",
            Direction::Down => "down",
            Direction::Left => "left",
            Direction::Right => "right",
        })
    }
}

/// Dominant axis of `to - from`; ties go to the vertical axis. A zero-length
/// swipe has no direction.
pub fn quantize_direction(from: Point, to: Point) -> Option<Direction> {
    let dx = to.x as i64 - from.x as i64;
    let dy = to.y as i64 - from.y as i64;
    if dx == 0 && dy == 0 {
        return None;
    }
    Some(if dx.abs() > dy.abs() {
        if dx > 0 {
            Direction::Right
        } else {
            Direction::Left
        }
    } else if dy > 0 {
        Direction::Down
    } else {
        Direction::Up
    })
}

/// Magnitude ratio `min / max`, 1 when both swipes are zero-length.
pub fn magnitude_similarity(a: f64, b: f64) -> f64 {
    let hi = a.max(b);
    if hi == 0.0 {
        1.0
    } else {
        a.min(b) / hi
    }
}
