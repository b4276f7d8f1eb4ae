# HTTP surface for the simulator, calendar and memory arithmetic
