import time

_boot_ = time.time()
