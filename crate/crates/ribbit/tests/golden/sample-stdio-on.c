/* Minimal host interpreter skeleton used to exercise specialization. */
#include <stdio.h> // @@(feature stdio)@@
int io_ready;

unsigned char ribn[9];

char *code = " !#$K~&'(";

unsigned char bytes[] = {0,1,2,3,42,91,5,6,7};

while ((d = [0,1,2][++op]) <= n) n -= d;

void dispatch(int op) {
  switch (op) {
    case 0: z=pop();y=pop();x=pop();push(rib(x,y,z)); break;
    case 1: putchar(NUM(pop())); break;
    case 2: push(FIX(getchar())); break;
    case 3: y=NUM(pop());x=NUM(pop());push(FIX(x+y)); break;
  }
}
