import faketf as tf

values = list(range(10))
pipeline = tf.data.Dataset.from_tensor_slices(values).batch(5)
ready = pipeline.prefetch(2)
model = tf.keras.Sequential()
model.add(tf.keras.layers.Dense(2))
model.fit(ready, epochs=2)
