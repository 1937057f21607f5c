use std::collections::VecDeque;
use std::sync::{Condvar, Mutex};
use std::time::Duration;

use super::frame::{Frame, FrameType};

/// Bounded outgoing frame queue. When full, the oldest sample batch is
/// dropped (or the oldest frame if none is queued) and counted.
pub struct FrameQueue {
    capacity: usize,
    inner: Mutex<QueueState>,
    ready: Condvar,
}

struct QueueState {
    frames: VecDeque<Frame>,
    dropped: u64,
    closed: bool,
}

impl FrameQueue {
    pub fn new(capacity: usize) -> Self {
        FrameQueue {
            capacity: capacity.max(1),
            inner: Mutex::new(QueueState {
                frames: VecDeque::with_capacity(capacity.max(1)),
                dropped: 0,
                closed: false,
            }),
            ready: Condvar::new(),
        }
    }

    pub fn push(&self, frame: Frame) {
        let mut st = self.inner.lock().expect("queue lock");
        if st.frames.len() >= self.capacity {
            let victim = st
                .frames
                .iter()
                .position(|f| f.frame_type == FrameType::SampleBatch)
                .unwrap_or(0);
            st.frames.remove(victim);
            st.dropped += 1;
        }
        st.frames.push_back(frame);
        self.ready.notify_one();
    }

    /// Waits up to `timeout` for a frame. `None` once closed and drained,
    /// or on timeout.
    pub fn pop(&self, timeout: Duration) -> Option<Frame> {
        let mut st = self.inner.lock().expect("queue lock");
        loop {
            if let Some(f) = st.frames.pop_front() {
                return Some(f);
            }
            if st.closed {
                return None;
            }
            let (next, res) = self.ready.wait_timeout(st, timeout).expect("queue lock");
            st = next;
            if res.timed_out() && st.frames.is_empty() {
                return None;
            }
        }
    }

    pub fn close(&self) {
        self.inner.lock().expect("queue lock").closed = true;
        self.ready.notify_all();
    }

    pub fn is_closed_and_empty(&self) -> bool {
        let st = self.inner.lock().expect("queue lock");
        st.closed && st.frames.is_empty()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().expect("queue lock").frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dropped(&self) -> u64 {
        self.inner.lock().expect("queue lock").dropped
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn drops_oldest_batch_first() {
        let q = FrameQueue::new(3);
        q.push(Frame::marker(0, 0, "a").unwrap());
        q.push(Frame::samples(1, 1, &[1.0]));
        q.push(Frame::samples(1, 2, &[2.0]));
        q.push(Frame::samples(1, 3, &[3.0]));
        assert_eq!(q.len(), 3);
        assert_eq!(q.dropped(), 1);
        let ts: Vec<u64> = std::iter::from_fn(|| q.pop(Duration::ZERO)).map(|f| f.t_us).collect();
        assert_eq!(ts, vec![0, 2, 3]);
    }

    #[test]
    fn close_wakes_consumer() {
        let q = std::sync::Arc::new(FrameQueue::new(4));
        let q2 = q.clone();
        let h = std::thread::spawn(move || q2.pop(Duration::from_secs(10)));
        std::thread::sleep(Duration::from_millis(20));
        q.close();
        assert!(h.join().unwrap().is_none());
    }
}
