use std::ops::Range;

use super::{ClusterError, NetworkModel};
use crate::phase::{NodeId, TransferPhase, TransferRecord};

/// Contiguous ranges of `0..n` for `k` workers. The first `n % k` get one extra item.
pub fn balanced_ranges(n: usize, k: usize) -> Vec<Range<usize>> {
    let base = n / k;
    let extra = n % k;
    let mut start = 0;
    (0..k)
        .map(|i| {
            let len = base + usize::from(i < extra);
            let r = start..start + len;
            start += len;
            r
        })
        .collect()
}

/// One worker's contiguous shard of the training set.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition<'a, T> {
    pub worker_id: usize,
    pub range: Range<usize>,
    pub examples: &'a [T],
}

impl<T> Partition<'_, T> {
    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// The master-to-worker transfer that ships this shard.
    pub fn distribution_record(&self, net: &NetworkModel, record_bytes: u64) -> TransferRecord {
        net.transfer(
            TransferPhase::DataDistribution,
            NodeId::Master,
            NodeId::Worker(self.worker_id),
            self.len() as u64 * record_bytes,
        )
    }
}

/// Splits `train_set` into `k` contiguous, balanced, nonempty shards.
pub fn partition<T>(train_set: &[T], k: usize) -> Result<Vec<Partition<'_, T>>, ClusterError> {
    if k == 0 {
        return Err(ClusterError::InvalidConfig("worker count must be at least 1".into()));
    }
    if k > train_set.len() {
        return Err(ClusterError::TooManyWorkers { workers: k, examples: train_set.len() });
    }
    Ok(balanced_ranges(train_set.len(), k)
        .into_iter()
        .enumerate()
        .map(|(worker_id, range)| Partition { worker_id, examples: &train_set[range.clone()], range })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sizes(n: usize, k: usize) -> Vec<usize> {
        let data: Vec<usize> = (0..n).collect();
        partition(&data, k).unwrap().iter().map(Partition::len).collect()
    }

    #[test]
    fn sentiment140_scale() {
        assert_eq!(balanced_ranges(1_600_000, 4).iter().map(|r| r.len()).collect::<Vec<_>>(), [400_000; 4]);
    }

    #[test]
    fn ten_over_three() {
        assert_eq!(sizes(10, 3), [4, 3, 3]);
    }

    #[test]
    fn single_worker_is_identity() {
        let data = [1, 2, 3];
        let parts = partition(&data, 1).unwrap();
        assert_eq!(parts.len(), 1);
        assert_eq!(parts[0].examples, &data);
    }

    #[test]
    fn too_many_workers() {
        assert!(matches!(partition(&[1, 2], 3), Err(ClusterError::TooManyWorkers { workers: 3, examples: 2 })));
        assert!(partition(&[1], 0).is_err());
    }

    #[test]
    fn distribution_bytes() {
        let data = [0u8; 10];
        let net = NetworkModel::default();
        let parts = partition(&data, 3).unwrap();
        let total: u64 = parts.iter().map(|p| p.distribution_record(&net, 100).bytes).sum();
        assert_eq!(total, 1000);
        let rec = parts[1].distribution_record(&net, 100);
        assert_eq!((rec.source, rec.dest, rec.bytes), (NodeId::Master, NodeId::Worker(1), 300));
    }

    proptest! {
        #[test]
        fn conservation(n in 1usize..2000, k in 1usize..64) {
            prop_assume!(k <= n);
            let data: Vec<usize> = (0..n).collect();
            let parts = partition(&data, k).unwrap();
            let lens: Vec<_> = parts.iter().map(Partition::len).collect();
            prop_assert_eq!(lens.iter().sum::<usize>(), n);
            prop_assert!(lens.iter().max().unwrap() - lens.iter().min().unwrap() <= 1);
            let joined: Vec<usize> = parts.iter().flat_map(|p| p.examples.iter().copied()).collect();
            prop_assert_eq!(joined, data);
        }
    }
}
