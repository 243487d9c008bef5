//! Block-linked address lists.
//!
//! Each indexed entity owns a [`BlockListHead`] holding its label, its
//! temperature and a chain of fixed-size [`AddressBlock`]s. Heads and blocks
//! live in slab arenas and are linked by index, so releasing an entity
//! recycles its storage without fragmenting the heap.

use crate::forest::NodeAddress;

/// Addresses per block.
pub const BLOCK_CAPACITY: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct HeadId(pub(crate) u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct BlockId(u32);

#[derive(Clone, Debug)]
pub struct AddressBlock {
    addresses: [NodeAddress; BLOCK_CAPACITY],
    used: u8,
    next: Option<BlockId>,
}

impl AddressBlock {
    fn empty() -> Self {
        Self {
            addresses: [NodeAddress::new(0, 0); BLOCK_CAPACITY],
            used: 0,
            next: None,
        }
    }

    pub fn addresses(&self) -> &[NodeAddress] {
        &self.addresses[..self.used as usize]
    }

    pub fn is_full(&self) -> bool {
        self.used as usize == BLOCK_CAPACITY
    }

    pub fn next(&self) -> Option<BlockId> {
        self.next
    }
}

#[derive(Clone, Debug)]
pub struct BlockListHead {
    label: Box<str>,
    pub(crate) temperature: u64,
    first: Option<BlockId>,
    last: Option<BlockId>,
    count: usize,
}

impl BlockListHead {
    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn temperature(&self) -> u64 {
        self.temperature
    }

    /// Total addresses across the chain.
    pub fn count(&self) -> usize {
        self.count
    }

    pub fn first_block(&self) -> Option<BlockId> {
        self.first
    }
}

#[derive(Clone, Debug, Default)]
pub struct BlockStore {
    heads: Vec<Option<BlockListHead>>,
    free_heads: Vec<u32>,
    blocks: Vec<AddressBlock>,
    free_blocks: Vec<u32>,
}

impl BlockStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Creates a head for `label` holding `addresses` (duplicates dropped,
    /// first occurrence order kept).
    pub fn create(&mut self, label: &str, addresses: &[NodeAddress]) -> HeadId {
        let head = BlockListHead {
            label: label.into(),
            temperature: 0,
            first: None,
            last: None,
            count: 0,
        };
        let id = match self.free_heads.pop() {
            Some(i) => {
                self.heads[i as usize] = Some(head);
                HeadId(i)
            }
            None => {
                self.heads.push(Some(head));
                HeadId(self.heads.len() as u32 - 1)
            }
        };
        if addresses.len() <= BLOCK_CAPACITY {
            for &a in addresses {
                self.append(id, a);
            }
        } else {
            let mut seen = std::collections::HashSet::with_capacity(addresses.len());
            for &a in addresses {
                if seen.insert(a) {
                    self.push_unchecked(id, a);
                }
            }
        }
        id
    }

    pub fn head(&self, id: HeadId) -> &BlockListHead {
        self.heads[id.0 as usize]
            .as_ref()
            .expect("head handle refers to a released list")
    }

    pub(crate) fn head_mut(&mut self, id: HeadId) -> &mut BlockListHead {
        self.heads[id.0 as usize]
            .as_mut()
            .expect("head handle refers to a released list")
    }

    pub fn block(&self, id: BlockId) -> &AddressBlock {
        &self.blocks[id.0 as usize]
    }

    pub fn contains(&self, id: HeadId, addr: NodeAddress) -> bool {
        self.blocks_of(id).any(|b| b.addresses().contains(&addr))
    }

    /// Appends `addr` unless already present. Returns whether it was added.
    pub fn append(&mut self, id: HeadId, addr: NodeAddress) -> bool {
        if self.contains(id, addr) {
            return false;
        }
        self.push_unchecked(id, addr);
        true
    }

    fn push_unchecked(&mut self, id: HeadId, addr: NodeAddress) {
        let tail = self.head(id).last;
        let target = match tail {
            Some(b) if !self.blocks[b.0 as usize].is_full() => b,
            _ => {
                let fresh = self.alloc_block();
                match tail {
                    Some(b) => self.blocks[b.0 as usize].next = Some(fresh),
                    None => self.head_mut(id).first = Some(fresh),
                }
                self.head_mut(id).last = Some(fresh);
                fresh
            }
        };
        let block = &mut self.blocks[target.0 as usize];
        block.addresses[block.used as usize] = addr;
        block.used += 1;
        self.head_mut(id).count += 1;
    }

    fn alloc_block(&mut self) -> BlockId {
        match self.free_blocks.pop() {
            Some(i) => {
                self.blocks[i as usize] = AddressBlock::empty();
                BlockId(i)
            }
            None => {
                self.blocks.push(AddressBlock::empty());
                BlockId(self.blocks.len() as u32 - 1)
            }
        }
    }

    /// Frees a head and its whole chain.
    pub fn release(&mut self, id: HeadId) {
        let head = self.heads[id.0 as usize]
            .take()
            .expect("double release of a block list");
        let mut cur = head.first;
        while let Some(b) = cur {
            cur = self.blocks[b.0 as usize].next;
            self.free_blocks.push(b.0);
        }
        self.free_heads.push(id.0);
    }

    /// Walks the chain block by block.
    pub fn blocks_of(&self, id: HeadId) -> BlockIter<'_> {
        BlockIter {
            store: self,
            next: self.head(id).first,
        }
    }

    pub fn addresses_of(&self, id: HeadId) -> impl Iterator<Item = NodeAddress> + '_ {
        self.blocks_of(id).flat_map(|b| b.addresses().iter().copied())
    }

    pub fn live_heads(&self) -> usize {
        self.heads.len() - self.free_heads.len()
    }
}

pub struct BlockIter<'a> {
    store: &'a BlockStore,
    next: Option<BlockId>,
}

impl<'a> Iterator for BlockIter<'a> {
    type Item = &'a AddressBlock;

    fn next(&mut self) -> Option<Self::Item> {
        let id = self.next?;
        let block = self.store.block(id);
        self.next = block.next;
        Some(block)
    }
}
