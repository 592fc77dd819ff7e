# D-RIS link simulator package
