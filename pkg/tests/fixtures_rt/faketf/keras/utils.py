def to_categorical(values, num_classes):
    out = []
    for value in values:
        row = [0] * num_classes
        row[value % num_classes] = 1
        out.append(row)
    return out


def normalize(values):
    total = sum(values) or 1
    return [v / total for v in values]
