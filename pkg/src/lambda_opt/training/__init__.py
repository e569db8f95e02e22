"""Training loops: lambda-opt SGD and fixed-lambda baselines."""
