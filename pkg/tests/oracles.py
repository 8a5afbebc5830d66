"""Independent reference models shared by several test modules."""


class DLLNode:
    __slots__ = ("key", "prev", "next")

    def __init__(self, key):
        self.key, self.prev, self.next = key, None, None


class ReferenceLRU:
    """Doubly-linked-list LRU with hash map, exact-key matching."""

    def __init__(self, capacity):
        self.capacity = capacity
        self.map = {}
        self.head = DLLNode(None)
        self.tail = DLLNode(None)
        self.head.next, self.tail.prev = self.tail, self.head
        self.hits = self.misses = self.evictions = 0

    def _unlink(self, node):
        node.prev.next, node.next.prev = node.next, node.prev

    def _push_front(self, node):
        node.next, node.prev = self.head.next, self.head
        self.head.next.prev = node
        self.head.next = node

    def lookup(self, key):
        node = self.map.get(key)
        if node is None:
            self.misses += 1
            return False
        self._unlink(node)
        self._push_front(node)
        self.hits += 1
        return True

    def insert(self, key):
        if key in self.map:
            node = self.map[key]
            self._unlink(node)
        else:
            if len(self.map) >= self.capacity:
                victim = self.tail.prev
                self._unlink(victim)
                del self.map[victim.key]
                self.evictions += 1
            node = DLLNode(key)
            self.map[key] = node
        self._push_front(node)

    def keys(self):
        return set(self.map)
