import faketf
import faketf as tf2
from faketf.keras.layers import Dense

a1 = faketf.constant([1, 1])
a2 = faketf.constant([2, 2])
a3 = faketf.add(a1, a2)
a4 = faketf.multiply(a1, a2)
s1 = faketf.reduce_sum(a3)
s2 = faketf.reduce_sum(a4)
print("sums:", s1, s2)

m1 = faketf.keras.Sequential()
m1.add(Dense(2))
m1.compile(loss="mse")
m1.fit([1, 2], epochs=1)

m2 = tf2.keras.Sequential()
m2.add(Dense(3))
m2.compile(loss="mae")
m2.fit([1, 2, 3], epochs=2)

for epochs in (1, 2):
    m3 = tf2.keras.Sequential()
    m3.add(Dense(epochs))
    m3.compile(loss="mse")
    m3.fit([0, 1], epochs=epochs)
    m3.summary()

u1 = faketf.keras.utils.normalize([1.0, 3.0])
u2 = faketf.keras.utils.to_categorical([0, 1], 2)
d1 = tf2.data.Dataset.from_tensor_slices(u2)
d2 = d1.batch(1)
d3 = d2.prefetch(1)
m4 = faketf.keras.Sequential([Dense(1)])
m4.compile(loss="mse")
m4.fit(d3, epochs=1)
pred4 = m4.predict([5])
print("u1:", u1)
print("pred4:", pred4)
