//! Outer reduction-stress loop.
