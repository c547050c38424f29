# Gateway
