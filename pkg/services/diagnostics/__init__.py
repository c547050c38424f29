# Diagnostics Service
