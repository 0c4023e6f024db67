class Dataset:
    def __init__(self, items):
        self.items = list(items)

    @staticmethod
    def from_tensor_slices(items):
        return Dataset(items)

    def batch(self, size):
        grouped = [self.items[i:i + size] for i in range(0, len(self.items), size)]
        return Dataset(grouped)

    def prefetch(self, n):
        return Dataset(self.items)

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        return iter(self.items)
