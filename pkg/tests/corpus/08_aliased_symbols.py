from faketf.keras.layers import Dense as D
from faketf.keras.layers import Dropout
from faketf.keras import optimizers as opt
import faketf as tf

stack = [D(64), Dropout(0.1), D(1)]
sgd = opt.SGD(learning_rate=0.5)
model = tf.keras.Sequential(stack)
model.compile(optimizer=sgd)
model.fit([1, 2], epochs=1)
