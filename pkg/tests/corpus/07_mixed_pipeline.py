import json

import faketf as tf
from faketf.keras import utils

raw = [0, 1, 2, 1, 0, 2, 1, 1]
labels = utils.to_categorical(raw, 3)
weights = utils.normalize([2.0, 3.0, 5.0])
meta = json.dumps({"classes": 3})
print("meta:", meta)
dataset = tf.data.Dataset.from_tensor_slices(labels)
batched = dataset.batch(2)
model = tf.keras.Sequential()
model.add(tf.keras.layers.Dense(3))
model.compile(optimizer="adam", loss="cce")
model.fit(batched, epochs=2)
print("weights:", weights)
