import faketf as tf

features = [[0.1], [0.2], [0.3]]
options = {"batch_size": 2, "verbose": 0}
extra = [1]
model = tf.keras.Sequential()
model.add(tf.keras.layers.Dense(4, "relu"))
model.compile(optimizer="sgd", loss="mse", metrics=["mae"])
model.fit(features, *extra, epochs=2, **options)
