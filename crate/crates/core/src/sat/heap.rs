//! Binary max-heap of variables keyed by activity; ties go to the smaller index.

#[derive(Debug, Default, Clone)]
pub(super) struct VarHeap {
    heap: Vec<usize>,
    /// Position of each variable in `heap`, or `usize::MAX` when absent.
    position: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

fn before(a: usize, b: usize, activity: &[f64]) -> bool {
    activity[a] > activity[b] || (activity[a] == activity[b] && a < b)
}

impl VarHeap {
    pub(super) fn grow(&mut self, n: usize) {
        if self.position.len() < n {
            self.position.resize(n, ABSENT);
        }
    }

    pub(super) fn contains(&self, v: usize) -> bool {
        self.position.get(v).is_some_and(|&p| p != ABSENT)
    }

    pub(super) fn insert(&mut self, v: usize, activity: &[f64]) {
        self.grow(v + 1);
        if self.contains(v) {
            return;
        }
        self.position[v] = self.heap.len();
        self.heap.push(v);
        self.sift_up(self.heap.len() - 1, activity);
    }

    /// Restores heap order after `v`'s activity increased.
    pub(super) fn update(&mut self, v: usize, activity: &[f64]) {
        if self.contains(v) {
            self.sift_up(self.position[v], activity);
        }
    }

    pub(super) fn pop(&mut self, activity: &[f64]) -> Option<usize> {
        let top = *self.heap.first()?;
        let last = self.heap.pop().expect("heap is nonempty");
        self.position[top] = ABSENT;
        if !self.heap.is_empty() {
            self.heap[0] = last;
            self.position[last] = 0;
            self.sift_down(0, activity);
        }
        Some(top)
    }

    fn sift_up(&mut self, mut i: usize, activity: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            if !before(v, self.heap[parent], activity) {
                break;
            }
            self.heap[i] = self.heap[parent];
            self.position[self.heap[i]] = i;
            i = parent;
        }
        self.heap[i] = v;
        self.position[v] = i;
    }

    fn sift_down(&mut self, mut i: usize, activity: &[f64]) {
        let v = self.heap[i];
        loop {
            let left = 2 * i + 1;
            if left >= self.heap.len() {
                break;
            }
            let right = left + 1;
            let child = if right < self.heap.len() && before(self.heap[right], self.heap[left], activity) {
                right
            } else {
                left
            };
            if !before(self.heap[child], v, activity) {
                break;
            }
            self.heap[i] = self.heap[child];
            self.position[self.heap[i]] = i;
            i = child;
        }
        self.heap[i] = v;
        self.position[v] = i;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_by_activity_then_index() {
        let activity = vec![1.0, 3.0, 3.0, 0.5, 2.0];
        let mut heap = VarHeap::default();
        for v in 0..5 {
            heap.insert(v, &activity);
        }
        heap.insert(2, &activity);
        let order: Vec<usize> = std::iter::from_fn(|| heap.pop(&activity)).collect();
        assert_eq!(order, vec![1, 2, 4, 0, 3]);
    }
}
