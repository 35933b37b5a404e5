use std::collections::BTreeMap;

/// Simulated time in nanoseconds since the start of the simulation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SimClock {
    now: u64,
}

impl SimClock {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn now(&self) -> u64 {
        self.now
    }

    fn advance_to(&mut self, t: u64) {
        assert!(t >= self.now, "clock cannot go backwards ({t} < {})", self.now);
        self.now = t;
    }
}

/// Discrete-event scheduler; the only owner allowed to move the clock.
///
/// Events with equal timestamps are delivered in scheduling order.
#[derive(Debug, Clone)]
pub struct Scheduler<E> {
    clock: SimClock,
    seq: u64,
    queue: BTreeMap<(u64, u64), E>,
}

impl<E> Default for Scheduler<E> {
    fn default() -> Self {
        Self {
            clock: SimClock::new(),
            seq: 0,
            queue: BTreeMap::new(),
        }
    }
}

impl<E> Scheduler<E> {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn clock(&self) -> SimClock {
        self.clock
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Queues `event` at absolute time `at`. Times in the past are clamped to now.
    pub fn schedule(&mut self, at: u64, event: E) {
        let at = at.max(self.now());
        self.queue.insert((at, self.seq), event);
        self.seq += 1;
    }

    /// Pops the next event due at or before `until`, moving the clock to it.
    pub fn pop_due(&mut self, until: u64) -> Option<(u64, E)> {
        let (&(at, seq), _) = self.queue.iter().next()?;
        if at > until {
            return None;
        }
        let event = self.queue.remove(&(at, seq)).expect("key just observed");
        self.clock.advance_to(at);
        Some((at, event))
    }

    /// Delivers every event due up to `until`, then parks the clock at `until`.
    pub fn run_until(&mut self, until: u64, mut deliver: impl FnMut(u64, E)) {
        while let Some((at, event)) = self.pop_due(until) {
            deliver(at, event);
        }
        if until > self.now() {
            self.clock.advance_to(until);
        }
    }

    /// Advances by `delta` nanoseconds, delivering due events on the way.
    pub fn advance(&mut self, delta: u64, deliver: impl FnMut(u64, E)) {
        let until = self.now().saturating_add(delta);
        self.run_until(until, deliver);
    }
}
