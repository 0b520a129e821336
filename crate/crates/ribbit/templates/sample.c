/* Minimal host interpreter skeleton used to exercise specialization. */
#include <stdio.h> // @@(feature stdio)@@
// @@(location decl)@@

// @@(replace "RIBN_SIZE" ribn-size
unsigned char ribn[RIBN_SIZE];
// )@@

// @@(replace "\"encoded RVM code\"" (encode 92)
char *code = "encoded RVM code";
// )@@

// @@(replace "literal-array-to-embed" (encode-as-bytes 256 "{" "," "}")
unsigned char bytes[] = literal-array-to-embed;
// )@@

// @@(replace "[0,1,2]" (list->host encoding/optimal/start "[" "," "]")
while ((d = [0,1,2][++op]) <= n) n -= d;
// )@@

void dispatch(int op) {
  switch (op) {
// @@(primitives (gen "    case " index ": " body)
// @@(primitive (##rib x y z)
z=pop();y=pop();x=pop();push(rib(x,y,z)); break;
// )@@
// @@(primitive (##putchar c) (use stdio)
putchar(NUM(pop())); break;
// )@@
// @@(primitive (##getchar) (use stdio)
push(FIX(getchar())); break;
// )@@
// @@(primitive (##+ x y)
y=NUM(pop());x=NUM(pop());push(FIX(x+y)); break;
// )@@
// )@@
  }
}
