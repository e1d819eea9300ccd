#ifndef X_H
#define X_H
int f(int a); /* trailing block never closed
int g(void);
